#include "cunet/data.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <numbers>

#include "binary_io.hpp"
#include "cunet/errors.hpp"

namespace cunet {

namespace fs = std::filesystem;

namespace {

constexpr std::string_view kSampleMagic = "CUNS";
constexpr std::string_view kSampleExt = ".cuns";

bool valid_label(std::uint8_t v) { return v == 0 || v == 1 || v == 2 || v == 4; }

// Star-shaped blob: an ellipse whose radius is modulated by a few angular harmonics.
struct Blob {
    double cy = 0, cx = 0, a = 1, b = 1, theta = 0;
    std::array<double, 3> amp{}, phase{};

    // Normalized radius; ≤ 1 inside the blob.
    double rho(double y, double x) const {
        const double dy = y - cy, dx = x - cx;
        const double u = (dx * std::cos(theta) + dy * std::sin(theta)) / a;
        const double v = (-dx * std::sin(theta) + dy * std::cos(theta)) / b;
        const double phi = std::atan2(v, u);
        double r = 1.0;
        for (std::size_t k = 0; k < amp.size(); ++k) r += amp[k] * std::cos(static_cast<double>(k + 2) * phi + phase[k]);
        return std::hypot(u, v) / r;
    }
};

Blob random_blob(std::mt19937_64& rng, double cy, double cx, double a, double b, double wobble) {
    std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
    std::uniform_real_distribution<double> amp(0.0, wobble);
    Blob blob{cy, cx, a, b, angle(rng), {}, {}};
    for (std::size_t k = 0; k < blob.amp.size(); ++k) {
        blob.amp[k] = amp(rng) / static_cast<double>(k + 1);
        blob.phase[k] = angle(rng);
    }
    return blob;
}

// Mean tissue intensities, rows ordered FLAIR, T1, T1ce, T2.
constexpr std::array<std::array<double, kModalities>, 4> kTissue = {{
    {0.40, 0.62, 0.55, 0.40},  // normal brain
    {0.72, 0.25, 0.30, 0.95},  // necrosis / non-enhancing (1)
    {0.92, 0.45, 0.45, 0.78},  // edema (2)
    {0.80, 0.52, 1.15, 0.58},  // enhancing rim (4)
}};

std::size_t tissue_row(std::uint8_t label) {
    switch (label) {
        case 1: return 1;
        case 2: return 2;
        case 4: return 3;
        default: return 0;
    }
}

}  // namespace

VolumeSample::VolumeSample(std::string id_, std::size_t h, std::size_t w)
    : id(std::move(id_)), height(h), width(w), image(kModalities * h * w, 0.0f), labels(1, h, w, 0),
      brain_mask(1, h, w, 0) {}

bool VolumeSample::has_tumor() const {
    return std::any_of(labels.values().begin(), labels.values().end(), [](auto v) { return v != 0; });
}

void VolumeSample::validate() const {
    if (height == 0 || width == 0) throw InputError("sample '" + id + "' has empty extents");
    if (image.size() != kModalities * height * width) throw InputError("sample '" + id + "' image size mismatch");
    if (!labels.same_extents(1, height, width) || !brain_mask.same_extents(1, height, width))
        throw InputError("sample '" + id + "' label/mask extents mismatch");
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (!valid_label(labels[i]))
            throw InputError("sample '" + id + "' has label " + std::to_string(labels[i]) + " outside {0,1,2,4}");
        if (brain_mask[i] > 1) throw InputError("sample '" + id + "' brain mask is not binary");
        if (labels[i] != 0 && !brain_mask[i]) throw InputError("sample '" + id + "' has tumor outside the brain");
    }
}

VolumeSample generate_phantom(std::mt19937_64& rng, const PhantomOptions& options) {
    const std::size_t n = options.size;
    if (n < 16) throw ContractError("phantom size must be at least 16");
    const double s = static_cast<double>(n);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    auto between = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };

    VolumeSample out("", n, n);
    const double c0 = (s - 1.0) / 2.0;
    const Blob brain = random_blob(rng, c0 + between(-0.03, 0.03) * s, c0 + between(-0.03, 0.03) * s,
                                   between(0.36, 0.42) * s, between(0.30, 0.38) * s, 0.04);

    const bool tumor = unit(rng) < options.q_tumor;
    Blob edema, core;
    double rim_inner = 0.0;
    if (tumor) {
        const double radius = between(0.0, 0.15) * s;
        const double dir = between(0.0, 2.0 * std::numbers::pi);
        const double ty = brain.cy + radius * std::sin(dir);
        const double tx = brain.cx + radius * std::cos(dir);
        edema = random_blob(rng, ty, tx, between(0.10, 0.17) * s, between(0.09, 0.15) * s, 0.10);
        const double scale = between(0.50, 0.65);
        core = random_blob(rng, ty + between(-0.01, 0.01) * s, tx + between(-0.01, 0.01) * s, edema.a * scale,
                           edema.b * scale, 0.08);
        // Enhancing rim about 2 px thick at 64×64, scaled with size.
        const double rim_px = std::max(1.5, 2.2 * s / 64.0);
        rim_inner = std::max(0.2, 1.0 - rim_px / std::min(core.a, core.b));
    }

    std::array<double, kModalities> gain{};
    for (double& g : gain) g = between(0.9, 1.1);
    const double bx = between(-0.15, 0.15), by = between(-0.15, 0.15), bq = between(-0.15, 0.15);
    std::normal_distribution<double> noise(0.0, 0.03);

    for (std::size_t y = 0; y < n; ++y) {
        for (std::size_t x = 0; x < n; ++x) {
            const double fy = static_cast<double>(y), fx = static_cast<double>(x);
            if (brain.rho(fy, fx) > 1.0) continue;
            out.brain_mask(0, y, x) = 1;
            std::uint8_t label = 0;
            if (tumor && edema.rho(fy, fx) <= 1.0) {
                label = 2;
                const double r = core.rho(fy, fx);
                if (r <= 1.0) label = r > rim_inner ? 4 : 1;
            }
            out.labels(0, y, x) = label;
            const double u = fx / s - 0.5, v = fy / s - 0.5;
            const double bias = 1.0 + bx * u + by * v + bq * (u * u + v * v);
            const double texture = 0.04 * std::sin(fx * 0.45 + 1.3 * std::cos(fy * 0.21));
            const auto& tissue = kTissue[tissue_row(label)];
            for (std::size_t m = 0; m < kModalities; ++m) {
                const double value = (tissue[m] * gain[m] + (label == 0 ? texture : 0.0)) * bias + noise(rng);
                out.pixel(static_cast<Modality>(m), y, x) = static_cast<float>(std::max(0.02, value));
            }
        }
    }
    return out;
}

std::vector<VolumeSample> generate_phantoms(std::size_t count, const PhantomOptions& options, std::uint64_t seed) {
    std::vector<VolumeSample> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                          static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(i >> 32)};
        std::mt19937_64 rng(seq);
        VolumeSample s = generate_phantom(rng, options);
        char id[32];
        std::snprintf(id, sizeof id, "case%05zu", i);
        s.id = id;
        out.push_back(std::move(s));
    }
    return out;
}

VolumeSample normalize_intensity(const VolumeSample& sample) {
    const std::size_t P = sample.height * sample.width;
    const std::size_t brain = count_set(sample.brain_mask);
    if (brain == 0) throw InputError("normalize_intensity: sample '" + sample.id + "' has an empty brain mask");
    VolumeSample out = sample;
    for (std::size_t m = 0; m < kModalities; ++m) {
        const float* src = sample.image.data() + m * P;
        double mean = 0.0;
        for (std::size_t i = 0; i < P; ++i)
            if (sample.brain_mask[i]) mean += src[i];
        mean /= static_cast<double>(brain);
        double var = 0.0;
        for (std::size_t i = 0; i < P; ++i)
            if (sample.brain_mask[i]) var += (src[i] - mean) * (src[i] - mean);
        const double sd = std::max(std::sqrt(var / static_cast<double>(brain)), 1e-8);
        float* dst = out.image.data() + m * P;
        for (std::size_t i = 0; i < P; ++i)
            dst[i] = sample.brain_mask[i] ? static_cast<float>((src[i] - mean) / sd) : 0.0f;
    }
    return out;
}

Mask extract_nonbrain_mask(const VolumeSample& sample) {
    const std::size_t P = sample.height * sample.width;
    Mask mask(1, sample.height, sample.width, 1);
    for (std::size_t m = 0; m < kModalities; ++m)
        for (std::size_t i = 0; i < P; ++i)
            if (sample.image[m * P + i] != 0.0f) mask[i] = 0;
    return mask;
}

VolumeSample transform(const VolumeSample& sample, unsigned quarter_turns, bool flip) {
    VolumeSample cur = sample;
    for (unsigned t = 0; t < quarter_turns % 4; ++t) {
        // Counter-clockwise: old (y, x) lands at (W−1−x, y).
        const std::size_t H = cur.height, W = cur.width;
        VolumeSample next(cur.id, W, H);
        for (std::size_t yn = 0; yn < W; ++yn) {
            for (std::size_t xn = 0; xn < H; ++xn) {
                const std::size_t y = xn, x = W - 1 - yn;
                for (std::size_t m = 0; m < kModalities; ++m)
                    next.pixel(static_cast<Modality>(m), yn, xn) = cur.pixel(static_cast<Modality>(m), y, x);
                next.labels(0, yn, xn) = cur.labels(0, y, x);
                next.brain_mask(0, yn, xn) = cur.brain_mask(0, y, x);
            }
        }
        cur = std::move(next);
    }
    if (flip) {
        const std::size_t W = cur.width;
        for (std::size_t y = 0; y < cur.height; ++y) {
            for (std::size_t x = 0; x < W / 2; ++x) {
                for (std::size_t m = 0; m < kModalities; ++m)
                    std::swap(cur.pixel(static_cast<Modality>(m), y, x),
                              cur.pixel(static_cast<Modality>(m), y, W - 1 - x));
                std::swap(cur.labels(0, y, x), cur.labels(0, y, W - 1 - x));
                std::swap(cur.brain_mask(0, y, x), cur.brain_mask(0, y, W - 1 - x));
            }
        }
    }
    return cur;
}

VolumeSample augment(const VolumeSample& sample, std::mt19937_64& rng) {
    const auto turns = static_cast<unsigned>(rng() >> 62);  // top two bits: uniform on 0..3
    const bool flip = (rng() >> 63) != 0;
    return transform(sample, turns, flip);
}

std::string_view split_name(SplitKind kind) {
    switch (kind) {
        case SplitKind::kTrain: return "train";
        case SplitKind::kVal: return "val";
        case SplitKind::kTest: return "test";
    }
    return "unknown";
}

std::vector<VolumeSample> filter_tumorless(std::vector<VolumeSample> cases, SplitKind kind) {
    if (kind != SplitKind::kTrain) return cases;
    std::erase_if(cases, [](const VolumeSample& s) { return !s.has_tumor(); });
    return cases;
}

DatasetSplit split_dataset(std::vector<std::string> ids, std::mt19937_64& rng) {
    std::shuffle(ids.begin(), ids.end(), rng);
    const std::size_t n = ids.size();
    const std::size_t held = (n + 2) / 5;  // round(n/5), halves rounded up
    DatasetSplit split;
    split.val.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(held));
    split.test.assign(ids.begin() + static_cast<std::ptrdiff_t>(held),
                      ids.begin() + static_cast<std::ptrdiff_t>(2 * held));
    split.train.assign(ids.begin() + static_cast<std::ptrdiff_t>(2 * held), ids.end());
    return split;
}

std::string encode_sample(const VolumeSample& sample) {
    sample.validate();
    io::ByteWriter out;
    out.tag(kSampleMagic);
    out.str(sample.id);
    out.u32(4);
    out.u32(static_cast<std::uint32_t>(sample.height));
    out.u32(4);
    out.u32(static_cast<std::uint32_t>(sample.width));
    out.bytes(sample.image.data(), sample.image.size() * sizeof(float));
    out.bytes(sample.labels.values().data(), sample.labels.size());
    out.bytes(sample.brain_mask.values().data(), sample.brain_mask.size());
    return out.take();
}

VolumeSample decode_sample(std::string_view bytes) {
    io::ByteReader in(bytes);
    in.expect_tag(kSampleMagic);
    std::string id = in.str("id", 4096);
    auto extent = [&](const char* what) {
        const auto at = in.offset();
        if (in.u32(what) != 4) throw FormatError(std::string("bad field length for ") + what, at);
        const auto v = in.u32(what);
        if (v == 0 || v > 16384) throw FormatError(std::string("implausible ") + what, at);
        return static_cast<std::size_t>(v);
    };
    const std::size_t h = extent("height");
    const std::size_t w = extent("width");
    VolumeSample s(std::move(id), h, w);
    in.bytes(s.image.data(), s.image.size() * sizeof(float), "image payload");
    in.bytes(s.labels.values().data(), s.labels.size(), "label payload");
    const auto mask_at = in.offset();
    in.bytes(s.brain_mask.values().data(), s.brain_mask.size(), "mask payload");
    if (in.remaining() != 0) throw FormatError("trailing bytes after payload", in.offset());
    try {
        s.validate();
    } catch (const InputError& e) {
        throw FormatError(e.what(), mask_at);
    }
    return s;
}

void write_sample(const std::string& path, const VolumeSample& sample) {
    io::write_file_atomic(path, encode_sample(sample));
}

VolumeSample read_sample(const std::string& path) { return decode_sample(io::read_file(path)); }

void write_dataset(const std::string& dir, const DatasetSplit& split, const std::vector<VolumeSample>& samples) {
    auto write_part = [&](SplitKind kind, const std::vector<std::string>& ids) {
        const fs::path sub = fs::path(dir) / split_name(kind);
        std::error_code ec;
        fs::create_directories(sub, ec);
        if (ec) throw IoError("cannot create '" + sub.string() + "': " + ec.message());
        for (const auto& id : ids) {
            const auto it = std::find_if(samples.begin(), samples.end(), [&](const VolumeSample& s) { return s.id == id; });
            if (it == samples.end()) throw InputError("write_dataset: no sample with id '" + id + "'");
            write_sample((sub / (id + std::string(kSampleExt))).string(), *it);
        }
    };
    write_part(SplitKind::kTrain, split.train);
    write_part(SplitKind::kVal, split.val);
    write_part(SplitKind::kTest, split.test);
}

std::vector<VolumeSample> read_split(const std::string& dir, SplitKind kind) {
    const fs::path sub = fs::path(dir) / split_name(kind);
    if (!fs::is_directory(sub)) throw IoError("missing split directory '" + sub.string() + "'");
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(sub))
        if (entry.is_regular_file() && entry.path().extension() == kSampleExt) files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    std::vector<VolumeSample> out;
    out.reserve(files.size());
    for (const auto& f : files) out.push_back(read_sample(f.string()));
    return out;
}

Tensor to_tensor(const std::vector<VolumeSample>& samples) {
    if (samples.empty()) throw ContractError("to_tensor: empty batch");
    const std::size_t h = samples[0].height, w = samples[0].width;
    Tensor t(Shape{samples.size(), kModalities, h, w});
    auto d = t.data();
    for (std::size_t n = 0; n < samples.size(); ++n) {
        if (samples[n].height != h || samples[n].width != w) throw ContractError("to_tensor: extents differ");
        std::copy(samples[n].image.begin(), samples[n].image.end(), d.begin() + n * kModalities * h * w);
    }
    return t;
}

LabelMap stack_labels(const std::vector<VolumeSample>& samples) {
    std::vector<LabelMap> planes;
    for (const auto& s : samples) planes.push_back(s.labels);
    return stack(planes);
}

Mask stack_brain_masks(const std::vector<VolumeSample>& samples) {
    std::vector<Mask> planes;
    for (const auto& s : samples) planes.push_back(s.brain_mask);
    return stack(planes);
}

}  // namespace cunet
