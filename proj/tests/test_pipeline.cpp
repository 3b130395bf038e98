#include <doctest.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "sfelab/pipeline.hpp"

using namespace sfelab;

namespace {

namespace fs = std::filesystem;

std::string data_dir() {
    const char* env = std::getenv("SFELAB_DATA_DIR");
    return env ? env : "data/mnist";
}

bool have_mnist() {
    return fs::exists(data_dir() + "/train-images-idx3-ubyte.gz") ||
           fs::exists(data_dir() + "/train-images-idx3-ubyte");
}

std::string temp_dir(const char* name) {
    const auto p = fs::temp_directory_path() / name;
    fs::remove_all(p);
    fs::create_directories(p);
    return p.string();
}

std::string slurp(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>());
}

/// Small-but-complete configuration: every stage runs, minutes become
/// seconds.
ExperimentConfig tiny_config(const std::string& out_dir) {
    ExperimentConfig cfg;
    cfg.data_dir = data_dir();
    cfg.train_subset = 768;
    cfg.test_subset = 192;
    cfg.epochs = 2;
    cfg.methods = {"fgsm"};
    cfg.max_images = 160;
    cfg.iterations = 150;
    cfg.advd_epochs = 8;
    cfg.out_dir = out_dir;
    cfg.timing_mode = "zero";
    cfg.seed = 11;
    return cfg;
}

}  // namespace

TEST_CASE("config parsing: defaults, overrides, and unknown keys") {
    const ExperimentConfig defaults = parse_config("");
    CHECK(defaults.model == "cnn1");
    CHECK(defaults.split_ratio == doctest::Approx(0.7));
    CHECK_NOTHROW(defaults.validate());

    const std::string path = (fs::temp_directory_path() / "sfelab_cfg_test.cfg").string();
    {
        std::ofstream os(path);
        os << "# comment\n[model]\nname = cnn2\nepochs = 3\n\n[sfe]\niterations = 500\n";
    }
    ExperimentConfig cfg = parse_config(path);
    CHECK(cfg.model == "cnn2");
    CHECK(cfg.epochs == 3);
    CHECK(cfg.iterations == 500);
    CHECK(cfg.batch == 64);  // untouched default

    // the flag layer wins over the file
    apply_config_override(cfg, "model.epochs", "9");
    CHECK(cfg.epochs == 9);

    CHECK_THROWS_WITH_AS(apply_config_override(cfg, "model.foo", "1"),
                         doctest::Contains("unknown key 'foo' in section [model]"), std::invalid_argument);
    CHECK_THROWS_WITH_AS(apply_config_override(cfg, "nonsense.x", "1"), doctest::Contains("unknown section"),
                         std::invalid_argument);
    CHECK_THROWS(apply_config_override(cfg, "model.epochs", "three"));

    {
        std::ofstream os(path);
        os << "[model]\nfoo = 1\n";
    }
    CHECK_THROWS(parse_config(path));
    std::remove(path.c_str());
}

TEST_CASE("config hash is stable and sensitive") {
    ExperimentConfig a, b;
    CHECK(a.hash() == b.hash());
    b.epochs += 1;
    CHECK(a.hash() != b.hash());
}

TEST_CASE("stage seeds differ per stage and reproduce") {
    ExperimentConfig cfg;
    CHECK(stage_seed(cfg, "target-train") == stage_seed(cfg, "target-train"));
    CHECK(stage_seed(cfg, "target-train") != stage_seed(cfg, "sfe-train-bim"));
}

TEST_CASE("fnv1a64 hashes content, not identity") {
    const char a[] = "hello";
    const char b[] = "hellp";
    CHECK(fnv1a64(a, 5) != fnv1a64(b, 5));
    CHECK(fnv1a64(a, 5) == fnv1a64(a, 5));
}

TEST_CASE("tiny pipeline runs end to end, caches, and reproduces byte-identical reports") {
    if (!have_mnist()) {
        MESSAGE("mnist data not found, skipping pipeline test");
        return;
    }

    const std::string dir1 = temp_dir("sfelab_pipe_a");
    ExperimentConfig cfg = tiny_config(dir1);
    const PipelineResult r1 = run_pipeline(cfg);
    REQUIRE(r1.reports.size() == 1);
    const EvalReport& rep = r1.reports[0];
    CHECK(rep.attack == "fgsm");
    CHECK(rep.acc > 0.8);
    CHECK(rep.asr > 0.2);
    CHECK(rep.dr >= 0.0);
    CHECK(rep.dr <= 1.0);
    CHECK(rep.dsr >= 0.0);
    CHECK(rep.dsr <= 1.0);
    CHECK(fs::exists(r1.report_path));
    CHECK(fs::exists(r1.summary_path));
    const std::vector<EvalReport> parsed = parse_report_csv(r1.report_path);
    REQUIRE(parsed.size() == 1);
    CHECK(parsed[0].asr == rep.asr);

    // rerun in place: caches hit, artifacts reused, same report
    const std::string first_bytes = slurp(r1.report_path);
    const PipelineResult r2 = run_pipeline(cfg);
    CHECK(slurp(r2.report_path) == first_bytes);
    double train_again = 0.0;
    for (const StageTiming& t : r2.timings)
        if (t.stage == "train-target") train_again = t.seconds;
    CHECK(train_again < 1.0);  // loaded from cache, not retrained

    // fresh directory, same seed: byte-identical csv
    const std::string dir2 = temp_dir("sfelab_pipe_b");
    ExperimentConfig cfg2 = tiny_config(dir2);
    const PipelineResult r3 = run_pipeline(cfg2);
    CHECK(slurp(r3.report_path) == first_bytes);

    // resumability: delete one intermediate artifact, rerun, identical bytes
    int removed = 0;
    for (const auto& entry : fs::directory_iterator(dir1)) {
        const std::string name = entry.path().filename().string();
        if (name.rfind("sfe-", 0) == 0) {
            fs::remove(entry.path());
            ++removed;
        }
    }
    CHECK(removed == 1);
    const PipelineResult r4 = run_pipeline(cfg);
    CHECK(slurp(r4.report_path) == first_bytes);

    fs::remove_all(dir1);
    fs::remove_all(dir2);
}
