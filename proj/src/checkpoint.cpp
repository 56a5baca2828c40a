#include "cunet/checkpoint.hpp"

#include "binary_io.hpp"

namespace cunet {

namespace {
constexpr std::string_view kMagic = "CUN1";
constexpr std::string_view kMomentumPrefix = "momentum/";
}  // namespace

std::string encode_checkpoint(const ParamSet& params) {
    io::ByteWriter out;
    out.tag(kMagic);
    out.u32(static_cast<std::uint32_t>(2 * params.size()));
    auto manifest = [&](const std::string& name, const Shape& s) {
        out.str(name);
        out.u64(s.n);
        out.u64(s.c);
        out.u64(s.h);
        out.u64(s.w);
    };
    for (const auto& e : params.entries()) manifest(e.name, e.value.shape());
    for (const auto& e : params.entries()) manifest(std::string(kMomentumPrefix) + e.name, e.value.shape());
    for (const auto& e : params.entries()) out.bytes(e.value.data().data(), e.value.numel() * sizeof(double));
    for (const auto& e : params.entries()) out.bytes(e.momentum.data(), e.momentum.size() * sizeof(double));
    return out.take();
}

ParamSet decode_checkpoint(std::string_view bytes) {
    io::ByteReader in(bytes);
    in.expect_tag(kMagic);
    const auto count = in.u32("entry count");
    struct Item {
        std::string name;
        Shape shape;
    };
    std::vector<Item> items;
    for (std::uint32_t i = 0; i < count; ++i) {
        Item it;
        it.name = in.str("entry name");
        const auto at = in.offset();
        it.shape = Shape{in.u64("extent"), in.u64("extent"), in.u64("extent"), in.u64("extent")};
        if (it.shape.numel() > (std::uint64_t{1} << 32)) throw FormatError("implausible tensor extents", at);
        items.push_back(std::move(it));
    }
    ParamSet params;
    for (const auto& it : items) {
        const auto at = in.offset();
        std::vector<double> values(it.shape.numel());
        in.bytes(values.data(), values.size() * sizeof(double), "payload");
        if (it.name.starts_with(kMomentumPrefix)) {
            const std::string owner = it.name.substr(kMomentumPrefix.size());
            if (!params.contains(owner)) throw FormatError("momentum for unknown parameter '" + owner + "'", at);
            auto& e = params.at(owner);
            if (e.value.shape() != it.shape) throw FormatError("momentum shape mismatch for '" + owner + "'", at);
            e.momentum = std::move(values);
        } else {
            if (params.contains(it.name)) throw FormatError("duplicate parameter '" + it.name + "'", at);
            params.add(it.name, Tensor(it.shape, std::move(values)));
        }
    }
    if (in.remaining() != 0) throw FormatError("trailing bytes after payload", in.offset());
    return params;
}

void save_checkpoint(const std::string& path, const ParamSet& params) {
    io::write_file_atomic(path, encode_checkpoint(params));
}

ParamSet load_checkpoint(const std::string& path) { return decode_checkpoint(io::read_file(path)); }

void load_checkpoint_into(const std::string& path, ParamSet& params) { params.assign_from(load_checkpoint(path)); }

}  // namespace cunet
