#include <gtest/gtest.h>

#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

namespace fs = std::filesystem;

namespace {

struct CliResult {
    int code = -1;
    std::string out;
    std::string err;
};

const fs::path& workdir() {
    static const fs::path dir = [] {
        fs::path d = fs::path(::testing::TempDir()) / "cunet_cli_test";
        fs::remove_all(d);
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

CliResult cli(const std::string& args) {
    const fs::path err = workdir() / "stderr.txt";
    const std::string cmd = std::string(CUNET_CLI_PATH) + " " + args + " 2>" + err.string();
    CliResult r;
    FILE* pipe = popen(cmd.c_str(), "r");
    if (!pipe) return r;
    std::array<char, 4096> buf;
    std::size_t n;
    while ((n = fread(buf.data(), 1, buf.size(), pipe)) > 0) r.out.append(buf.data(), n);
    const int status = pclose(pipe);
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.err = slurp(err);
    return r;
}

nlohmann::json last_json_line(const std::string& text) {
    std::istringstream in(text);
    std::string line, last;
    while (std::getline(in, line))
        if (!line.empty() && line.front() == '{') last = line;
    return nlohmann::json::parse(last);
}

// Shared dataset and trained model for the pipeline tests.
class Pipeline : public ::testing::Test {
protected:
    static void SetUpTestSuite() {
        data = workdir() / "data";
        model = workdir() / "model";
        const fs::path cfg = workdir() / "train.cfg";
        std::ofstream(cfg) << "# quick run\nmax_epochs = 2\nbatch_size = 2\ncontour_width = 2\nlr0 = 0.01\n"
                              "model.depth = 2\nmodel.base_channels = 4\n";
        synth = cli("-q synth --out-dir " + data.string() + " --count 10 --size 16 --seed 3 --q_tumor 1");
        train = cli("-q train --config " + cfg.string() + " --data-dir " + data.string() + " --out-dir " +
                    model.string() + " --seed 2 --model.seed 4");
    }
    static inline fs::path data, model;
    static inline CliResult synth, train;
};

}  // namespace

TEST_F(Pipeline, SynthWritesSplits) {
    ASSERT_EQ(synth.code, 0) << synth.err;
    const auto j = last_json_line(synth.out);
    EXPECT_EQ(j.at("train"), 6);
    EXPECT_EQ(j.at("val"), 2);
    EXPECT_EQ(j.at("test"), 2);
    std::size_t files = 0;
    for (const auto& e : fs::directory_iterator(data / "train")) files += e.path().extension() == ".cuns";
    EXPECT_EQ(files, 6u);
}

TEST_F(Pipeline, TrainWritesArtifacts) {
    ASSERT_EQ(train.code, 0) << train.err;
    for (const char* f : {"best.ckpt", "model.cfg", "train.cfg", "history.csv"})
        EXPECT_TRUE(fs::exists(model / f)) << f;
    const std::string history = slurp(model / "history.csv");
    EXPECT_EQ(history.substr(0, history.find('\n')), "epoch,lr,omega,train_loss,val_loss,steps,skipped");
    EXPECT_EQ(std::count(history.begin(), history.end(), '\n'), 3);
    const std::string saved = slurp(model / "train.cfg");
    EXPECT_NE(saved.find("seed = 2"), std::string::npos);
    EXPECT_NE(slurp(model / "model.cfg").find("seed = 4"), std::string::npos);
}

TEST_F(Pipeline, TrainingIsReproducible) {
    ASSERT_EQ(train.code, 0);
    const fs::path again = workdir() / "model_again";
    const CliResult r = cli("-q train --config " + (workdir() / "train.cfg").string() + " --data-dir " + data.string() +
                      " --out-dir " + again.string() + " --seed 2 --model.seed 4");
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(slurp(again / "best.ckpt"), slurp(model / "best.ckpt"));
    EXPECT_EQ(slurp(again / "history.csv"), slurp(model / "history.csv"));
}

TEST_F(Pipeline, EvalWritesReports) {
    ASSERT_EQ(train.code, 0);
    const fs::path stem = workdir() / "report";
    const CliResult r = cli("-q eval --checkpoint " + (model / "best.ckpt").string() + " --data-dir " + data.string() +
                      " --report " + stem.string());
    ASSERT_EQ(r.code, 0) << r.err;
    const auto j = nlohmann::json::parse(r.out);
    EXPECT_EQ(j.at("cases"), 2);
    const std::string csv = slurp(stem.string() + ".csv");
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);
    EXPECT_EQ(nlohmann::json::parse(slurp(stem.string() + ".json")), j);
}

TEST_F(Pipeline, PredictRendersOverlay) {
    ASSERT_EQ(train.code, 0);
    const fs::path case_file = fs::directory_iterator(data / "test")->path();
    const fs::path image = workdir() / "overlay.ppm";
    const CliResult r = cli("-q predict --checkpoint " + (model / "best.ckpt").string() + " --case " +
                      case_file.string() + " --out " + image.string());
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(slurp(image).substr(0, 9), "P6\n16 16\n");
    const auto j = last_json_line(r.out);
    std::size_t total = 0;
    for (const auto& [label, count] : j.at("label_counts").items()) total += count.get<std::size_t>();
    EXPECT_EQ(total, 256u);
}

TEST(Cli, GradcheckPasses) {
    const CliResult r = cli("gradcheck --seeds 1");
    ASSERT_EQ(r.code, 0) << r.err;
    const auto j = nlohmann::json::parse(r.out);
    EXPECT_TRUE(j.at("pass").get<bool>());
    EXPECT_FALSE(j.at("results").empty());
}

TEST(Cli, GradcheckImpossibleToleranceFails) {
    const CliResult r = cli("gradcheck --seeds 1 --tolerance 1e-300");
    EXPECT_EQ(r.code, 6);
    EXPECT_EQ(last_json_line(r.err).at("error"), "gradcheck");
}

TEST(Cli, UnknownConfigKeyIsUsageError) {
    const fs::path cfg = workdir() / "bad.cfg";
    std::ofstream(cfg) << "bogus_key = 1\n";
    const CliResult r = cli("synth --config " + cfg.string() + " --out-dir " + (workdir() / "unused").string());
    EXPECT_EQ(r.code, 2);
    const auto j = last_json_line(r.err);
    EXPECT_EQ(j.at("error"), "config");
    EXPECT_NE(j.at("message").get<std::string>().find("bogus_key"), std::string::npos);
}

TEST(Cli, BadFlagIsUsageError) {
    const CliResult r = cli("train --no-such-flag");
    EXPECT_EQ(r.code, 2);
    EXPECT_EQ(last_json_line(r.err).at("error"), "usage");
}

TEST(Cli, MalformedValueIsConfigError) {
    const CliResult r = cli("synth --out-dir " + (workdir() / "unused").string() + " --count many");
    EXPECT_EQ(r.code, 2);
    EXPECT_EQ(last_json_line(r.err).at("error"), "config");
}

TEST(Cli, CorruptCheckpointIsFormatError) {
    const fs::path bad = workdir() / "corrupt.ckpt";
    std::ofstream(bad) << "not a checkpoint";
    std::ofstream(workdir() / "model.cfg") << "depth = 2\nbase_channels = 4\n";
    const CliResult r = cli("eval --checkpoint " + bad.string() + " --data-dir " + workdir().string());
    EXPECT_EQ(r.code, 4);
    EXPECT_EQ(last_json_line(r.err).at("error"), "format");
}

TEST(Cli, MissingSubcommandFails) {
    const CliResult r = cli("");
    EXPECT_NE(r.code, 0);
}
