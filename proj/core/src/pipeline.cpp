// Copyright 2026 sfelab contributors
// SPDX-License-Identifier: Apache-2.0

#include "sfelab/pipeline.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <atomic>
#include <thread>

#include "sfelab/attacks.hpp"
#include "sfelab/mnist.hpp"
#include "sfelab/rng.hpp"

namespace sfelab {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// config

namespace {

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r");
    size_t b = s.find_last_not_of(" \t\r");
    return a == std::string::npos ? "" : s.substr(a, b - a + 1);
}

std::vector<std::string> split_csv(const std::string& s) {
    std::vector<std::string> out;
    std::istringstream is(s);
    std::string item;
    while (std::getline(is, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

int to_int(const std::string& v, const std::string& key) {
    try {
        size_t pos = 0;
        const int r = std::stoi(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("trailing");
        return r;
    } catch (...) {
        throw std::invalid_argument("config: malformed integer '" + v + "' for " + key);
    }
}

double to_double(const std::string& v, const std::string& key) {
    try {
        size_t pos = 0;
        const double r = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("trailing");
        return r;
    } catch (...) {
        throw std::invalid_argument("config: malformed number '" + v + "' for " + key);
    }
}

const std::vector<std::string> kKnownAttacks = {"fgsm", "bim",  "mifgsm", "pgd",
                                                "deepfool", "auna", "cra",    "pwa"};

bool known_attack(const std::string& name) {
    for (const auto& a : kKnownAttacks)
        if (a == name) return true;
    return false;
}

}  // namespace

void apply_config_override(ExperimentConfig& cfg, const std::string& dotted_key, const std::string& value) {
    const size_t dot = dotted_key.find('.');
    if (dot == std::string::npos)
        throw std::invalid_argument("config: expected section.key, got '" + dotted_key + "'");
    const std::string section = dotted_key.substr(0, dot);
    const std::string key = dotted_key.substr(dot + 1);
    auto unknown = [&]() {
        throw std::invalid_argument("config: unknown key '" + key + "' in section [" + section + "]");
    };

    if (section == "data") {
        if (key == "dir") cfg.data_dir = value;
        else if (key == "train_subset") cfg.train_subset = to_int(value, dotted_key);
        else if (key == "test_subset") cfg.test_subset = to_int(value, dotted_key);
        else unknown();
    } else if (section == "model") {
        if (key == "name") cfg.model = value;
        else if (key == "tap") cfg.tap = value;
        else if (key == "epochs") cfg.epochs = to_int(value, dotted_key);
        else if (key == "batch") cfg.batch = to_int(value, dotted_key);
        else unknown();
    } else if (section == "attacks") {
        if (key == "methods") cfg.methods = split_csv(value);
        else if (key == "max_images") cfg.max_images = to_int(value, dotted_key);
        else if (key.rfind("max_images_", 0) == 0) {
            const std::string attack = key.substr(std::string("max_images_").size());
            if (!known_attack(attack)) unknown();
            cfg.max_images_per_attack[attack] = to_int(value, dotted_key);
        } else {
            unknown();
        }
    } else if (section == "sfe") {
        if (key == "kd") cfg.kd = to_int(value, dotted_key);
        else if (key == "mb") cfg.mb = to_int(value, dotted_key);
        else if (key == "iterations") cfg.iterations = to_int(value, dotted_key);
        else if (key == "disc_output") cfg.disc_output = value;
        else unknown();
    } else if (section == "advd") {
        if (key == "epochs") cfg.advd_epochs = to_int(value, dotted_key);
        else if (key == "batch") cfg.advd_batch = to_int(value, dotted_key);
        else if (key == "threshold") cfg.threshold = to_double(value, dotted_key);
        else unknown();
    } else if (section == "eval") {
        if (key == "split_ratio") cfg.split_ratio = to_double(value, dotted_key);
        else unknown();
    } else if (section == "report") {
        if (key == "timing_mode") cfg.timing_mode = value;
        else unknown();
    } else if (section == "run") {
        if (key == "seed") cfg.seed = static_cast<std::uint64_t>(std::stoull(value));
        else if (key == "out_dir") cfg.out_dir = value;
        else if (key == "threads") cfg.threads = to_int(value, dotted_key);
        else unknown();
    } else {
        throw std::invalid_argument("config: unknown section [" + section + "]");
    }
}

ExperimentConfig parse_config(const std::string& path) {
    ExperimentConfig cfg;
    if (path.empty()) return cfg;
    std::ifstream is(path);
    if (!is) throw std::runtime_error("config: cannot open '" + path + "'");
    std::string line, section;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        line = trim(line);
        if (line.empty() || line[0] == '#' || line[0] == ';') continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw std::invalid_argument("config: malformed section at line " + std::to_string(lineno));
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        const size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("config: expected key=value at line " + std::to_string(lineno));
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (section.empty())
            throw std::invalid_argument("config: key '" + key + "' outside any section");
        apply_config_override(cfg, section + "." + key, value);
    }
    cfg.validate();
    return cfg;
}

void ExperimentConfig::validate() const {
    if (model != "cnn1" && model != "cnn2")
        throw std::invalid_argument("config: model must be cnn1 or cnn2, got '" + model + "'");
    if (tap != "feature" && tap != "logits")
        throw std::invalid_argument("config: tap must be feature or logits");
    if (!(split_ratio > 0.0 && split_ratio < 1.0))
        throw std::invalid_argument("config: split_ratio must be in (0,1)");
    if (timing_mode != "measured" && timing_mode != "zero")
        throw std::invalid_argument("config: timing_mode must be measured or zero");
    if (disc_output != "tanh" && disc_output != "sigmoid")
        throw std::invalid_argument("config: disc_output must be tanh or sigmoid");
    for (const std::string& m : methods)
        if (!known_attack(m)) throw std::invalid_argument("config: unknown attack '" + m + "'");
    if (threads < 1) throw std::invalid_argument("config: threads must be >= 1");
}

std::string ExperimentConfig::serialize() const {
    std::ostringstream os;
    os << "[data]\n"
       << "dir = " << data_dir << "\n"
       << "train_subset = " << train_subset << "\n"
       << "test_subset = " << test_subset << "\n"
       << "[model]\n"
       << "name = " << model << "\n"
       << "tap = " << tap << "\n"
       << "epochs = " << epochs << "\n"
       << "batch = " << batch << "\n"
       << "[attacks]\n"
       << "methods = ";
    for (size_t i = 0; i < methods.size(); ++i) os << (i ? "," : "") << methods[i];
    os << "\n"
       << "max_images = " << max_images << "\n";
    for (const auto& kv : max_images_per_attack) os << "max_images_" << kv.first << " = " << kv.second << "\n";
    os << "[sfe]\n"
       << "kd = " << kd << "\n"
       << "mb = " << mb << "\n"
       << "iterations = " << iterations << "\n"
       << "disc_output = " << disc_output << "\n"
       << "[advd]\n"
       << "epochs = " << advd_epochs << "\n"
       << "batch = " << advd_batch << "\n"
       << "threshold = " << threshold << "\n"
       << "[eval]\n"
       << "split_ratio = " << split_ratio << "\n"
       << "[report]\n"
       << "timing_mode = " << timing_mode << "\n"
       << "[run]\n"
       << "seed = " << seed << "\n"
       << "out_dir = " << out_dir << "\n"
       << "threads = " << threads << "\n";
    return os.str();
}

std::uint64_t fnv1a64(const void* data, size_t len, std::uint64_t basis) {
    const auto* p = static_cast<const unsigned char*>(data);
    std::uint64_t h = basis;
    for (size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

std::uint64_t fnv1a64_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("hash: cannot open '" + path + "'");
    std::uint64_t h = 0xcbf29ce484222325ull;
    char buf[1 << 16];
    while (is.read(buf, sizeof(buf)) || is.gcount() > 0) {
        h = fnv1a64(buf, static_cast<size_t>(is.gcount()), h);
        if (is.eof()) break;
    }
    return h;
}

namespace {

std::string hex16(std::uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace

std::string ExperimentConfig::hash() const {
    // experiment identity: everything except where results land and how
    // many workers computed them
    std::string s = serialize();
    const size_t run = s.find("[run]");
    std::string identity = s.substr(0, run);
    identity += "seed = " + std::to_string(seed) + "\n";
    return hex16(fnv1a64(identity.data(), identity.size()));
}

std::uint64_t stage_seed(const ExperimentConfig& cfg, const std::string& stage) {
    return Rng::derive(cfg.seed, fnv1a64(stage.data(), stage.size()));
}

// ---------------------------------------------------------------------------
// pipeline

namespace {

/// Config slice that affects the trained target model.
std::string target_key(const ExperimentConfig& cfg) {
    std::ostringstream os;
    os << "target|" << cfg.data_dir << "|" << cfg.train_subset << "|" << cfg.test_subset << "|" << cfg.model
       << "|" << cfg.tap << "|" << cfg.epochs << "|" << cfg.batch << "|" << cfg.seed;
    return os.str();
}

std::string attack_key(const ExperimentConfig& cfg, const std::string& method, std::uint64_t clf_hash) {
    std::ostringstream os;
    int cap = cfg.max_images;
    const auto it = cfg.max_images_per_attack.find(method);
    if (it != cfg.max_images_per_attack.end()) cap = it->second;
    os << "attack|" << method << "|" << cap << "|" << cfg.seed << "|" << hex16(clf_hash);
    return os.str();
}

std::string sfe_key(const ExperimentConfig& cfg, const std::string& method, std::uint64_t pairs_hash) {
    std::ostringstream os;
    os << "sfe|" << method << "|" << cfg.kd << "|" << cfg.mb << "|" << cfg.iterations << "|"
       << cfg.disc_output << "|" << cfg.split_ratio << "|" << cfg.seed << "|" << hex16(pairs_hash);
    return os.str();
}

std::string advd_key(const ExperimentConfig& cfg, const std::string& method, std::uint64_t sfe_hash) {
    std::ostringstream os;
    os << "advd|" << method << "|" << cfg.advd_epochs << "|" << cfg.advd_batch << "|" << cfg.threshold << "|"
       << cfg.seed << "|" << hex16(sfe_hash);
    return os.str();
}

std::string key_path(const ExperimentConfig& cfg, const std::string& prefix, const std::string& key) {
    return cfg.out_dir + "/" + prefix + "-" + hex16(fnv1a64(key.data(), key.size())) + ".sfel";
}

double seconds_since(const std::chrono::steady_clock::time_point& t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

int attack_cap(const ExperimentConfig& cfg, const std::string& method) {
    const auto it = cfg.max_images_per_attack.find(method);
    return it != cfg.max_images_per_attack.end() ? it->second : cfg.max_images;
}

AttackSpec attack_spec_for(const ExperimentConfig& cfg, const std::string& method, int attack_index) {
    AttackSpec spec = AttackSpec::preset(method);
    spec.seed = Rng::derive(stage_seed(cfg, "attack"), static_cast<std::uint64_t>(attack_index));
    return spec;
}

}  // namespace

PipelineResult run_pipeline(const ExperimentConfig& cfg) {
    cfg.validate();
    fs::create_directories(cfg.out_dir);
    PipelineResult result;
    const std::string cfg_hash = cfg.hash();

    {  // resolved config echo
        std::ofstream os(cfg.out_dir + "/config-" + cfg_hash + ".txt", std::ios::binary);
        os << cfg.serialize();
    }

    auto log_stage = [&](const std::string& stage, double s) { result.timings.push_back({stage, s}); };

    // ---- data
    auto t0 = std::chrono::steady_clock::now();
    const MnistData mnist = load_mnist(cfg.data_dir);
    ImageSet train = cfg.train_subset > 0 && cfg.train_subset < mnist.train.count()
                         ? mnist.train.subset(0, cfg.train_subset)
                         : mnist.train;
    ImageSet test = cfg.test_subset > 0 && cfg.test_subset < mnist.test.count()
                        ? mnist.test.subset(0, cfg.test_subset)
                        : mnist.test;
    log_stage("load-data", seconds_since(t0));

    // ---- target model
    t0 = std::chrono::steady_clock::now();
    const std::string target_path = key_path(cfg, "target", target_key(cfg));
    Classifier clf;
    if (fs::exists(target_path)) {
        clf = load_classifier(target_path);
    } else {
        clf = build_cnn(cfg.model, stage_seed(cfg, "target-init"),
                        cfg.tap == "logits" ? FeatureTap::logits : FeatureTap::dense128);
        train_classifier(clf, train, cfg.epochs, cfg.batch, stage_seed(cfg, "target-train"));
        save_classifier(clf, target_path);
    }
    result.benign_accuracy = accuracy(clf, test);
    log_stage("train-target", seconds_since(t0));
    const std::uint64_t clf_hash = fnv1a64_file(target_path);

    // ---- attacks (independent per method; may fan out across threads on
    // classifier snapshots)
    std::vector<PairDataset> all_pairs(cfg.methods.size());
    std::vector<AttackRunStats> all_stats(cfg.methods.size());
    t0 = std::chrono::steady_clock::now();
    {
        std::vector<int> todo;
        for (size_t m = 0; m < cfg.methods.size(); ++m) {
            const std::string path = key_path(cfg, "pairs-" + cfg.methods[m],
                                              attack_key(cfg, cfg.methods[m], clf_hash));
            if (fs::exists(path)) {
                all_pairs[m] = load_pairs(path);
                AttackRunStats st;
                st.attacked = all_pairs[m].count();
                st.succeeded = all_pairs[m].success_count();
                st.asr_defined = st.attacked > 0;
                st.asr = st.attacked ? static_cast<double>(st.succeeded) / st.attacked : 0.0;
                all_stats[m] = st;  // rho recomputed below
            } else {
                todo.push_back(static_cast<int>(m));
            }
        }
        const int workers = std::max(1, std::min<int>(cfg.threads, static_cast<int>(todo.size())));
        std::vector<std::thread> pool;
        std::atomic<size_t> next{0};
        auto work = [&]() {
            Classifier snapshot = load_classifier(target_path);  // private copy
            while (true) {
                const size_t t = next.fetch_add(1);
                if (t >= todo.size()) break;
                const int m = todo[t];
                const AttackSpec spec = attack_spec_for(cfg, cfg.methods[static_cast<size_t>(m)], m);
                all_pairs[static_cast<size_t>(m)] =
                    run_attack(snapshot, test, spec, attack_cap(cfg, cfg.methods[static_cast<size_t>(m)]),
                               &all_stats[static_cast<size_t>(m)]);
            }
        };
        if (workers <= 1) {
            Classifier& snapshot = clf;
            for (int m : todo) {
                const AttackSpec spec = attack_spec_for(cfg, cfg.methods[static_cast<size_t>(m)], m);
                all_pairs[static_cast<size_t>(m)] =
                    run_attack(snapshot, test, spec, attack_cap(cfg, cfg.methods[static_cast<size_t>(m)]),
                               &all_stats[static_cast<size_t>(m)]);
            }
        } else {
            for (int w = 0; w < workers; ++w) pool.emplace_back(work);
            for (auto& th : pool) th.join();
        }
        for (int m : todo) {
            const std::string path = key_path(cfg, "pairs-" + cfg.methods[static_cast<size_t>(m)],
                                              attack_key(cfg, cfg.methods[static_cast<size_t>(m)], clf_hash));
            save_pairs(all_pairs[static_cast<size_t>(m)], path);
        }
    }
    log_stage("attacks", seconds_since(t0));

    // recompute perturbation stats uniformly (cache reload path included)
    for (size_t m = 0; m < cfg.methods.size(); ++m) {
        const PairDataset& pairs = all_pairs[m];
        double l2_sum = 0.0, px_sum = 0.0;
        const std::int64_t row = pairs.count() ? pairs.benign.images.size() / pairs.count() : 1;
        int succ = 0;
        for (int i = 0; i < pairs.count(); ++i) {
            if (!pairs.success[static_cast<size_t>(i)]) continue;
            ++succ;
            double l2 = 0.0, l1 = 0.0;
            for (std::int64_t j = 0; j < row; ++j) {
                const double d = static_cast<double>(pairs.adversarial[i * row + j]) -
                                 pairs.benign.images[i * row + j];
                l2 += d * d;
                l1 += std::fabs(d);
            }
            l2_sum += std::sqrt(l2);
            px_sum += l1 / static_cast<double>(row);
        }
        if (succ > 0) {
            all_stats[m].mean_rho_l2 = l2_sum / succ;
            all_stats[m].mean_rho_pixel = px_sum / succ;
        }
    }

    // ---- per-attack defense stack and evaluation
    for (size_t m = 0; m < cfg.methods.size(); ++m) {
        const std::string& method = cfg.methods[m];
        const PairDataset usable = all_pairs[m].successful();
        EvalReport report;
        report.experiment_id = cfg_hash + "-" + method;
        report.model = cfg.model;
        report.attack = method;
        report.eps = AttackSpec::preset(method).epsilon;
        report.acc = result.benign_accuracy;
        report.asr = all_stats[m].asr;
        report.rho_l2 = all_stats[m].mean_rho_l2;
        report.rho_px = all_stats[m].mean_rho_pixel;
        report.seed = cfg.seed;

        if (usable.count() < 4) {
            result.reports.push_back(report);
            continue;
        }

        const std::string pairs_path =
            key_path(cfg, "pairs-" + method, attack_key(cfg, method, clf_hash));
        const std::uint64_t pairs_hash = fnv1a64_file(pairs_path);
        const SplitPairs split =
            split_detection_set(usable, cfg.split_ratio, stage_seed(cfg, "split-" + method));

        // SFE
        t0 = std::chrono::steady_clock::now();
        const std::string sfe_path = key_path(cfg, "sfe-" + method, sfe_key(cfg, method, pairs_hash));
        SfeModel sfe;
        if (fs::exists(sfe_path)) {
            sfe = load_sfe(sfe_path);
        } else {
            sfe = build_sfe(clf.tap_dim(), stage_seed(cfg, "sfe-init-" + method),
                            cfg.disc_output == "sigmoid" ? DiscOutput::sigmoid : DiscOutput::tanh_unit);
            sfe.k_d = cfg.kd;
            sfe.minibatch = cfg.mb;
            const FeaturePairSet feats = extract_feature_pairs(clf, split.train);
            pretrain_discriminator(sfe, feats, cfg.kd, cfg.mb, stage_seed(cfg, "sfe-pre-" + method));
            train_sfe(sfe, feats, cfg.iterations, cfg.mb, stage_seed(cfg, "sfe-train-" + method));
            save_sfe(sfe, sfe_path);
        }
        double train_s = seconds_since(t0);

        // AdvD
        t0 = std::chrono::steady_clock::now();
        const std::string advd_path =
            key_path(cfg, "advd-" + method, advd_key(cfg, method, fnv1a64_file(sfe_path)));
        AdvDetector det;
        if (fs::exists(advd_path)) {
            det = load_detector(advd_path);
        } else {
            det = build_detector(clf.tap_dim(), stage_seed(cfg, "advd-init-" + method));
            det.set_threshold(static_cast<float>(cfg.threshold));
            train_advd(det, sfe, clf, split.train, cfg.advd_epochs, cfg.advd_batch,
                       stage_seed(cfg, "advd-train-" + method));
            save_detector(det, advd_path);
        }
        train_s += seconds_since(t0);

        // evaluation on the held-out split
        t0 = std::chrono::steady_clock::now();
        report.dr = detection_rate(det, sfe, clf, split.test);
        report.dsr = defense_success_rate(clf, sfe, split.test).value_or(0.0);
        const Tensor adv_feat = clf.extract_feature(split.test.adversarial);
        report.fsa = fsa(adv_feat, split.test.benign.labels, 10).fsa;
        report.fsd = fsd(adv_feat, split.test.benign.labels, 10);
        result.trends[method] = trend_analysis(clf, sfe, split.test);

        const std::vector<int> defended = defend(clf, sfe, test.images);
        int correct = 0;
        for (int i = 0; i < test.count(); ++i)
            correct += defended[static_cast<size_t>(i)] == test.labels[static_cast<size_t>(i)] ? 1 : 0;
        result.defended_benign_accuracy[method] = static_cast<double>(correct) / std::max(1, test.count());
        const double test_s = seconds_since(t0);

        report.train_s = cfg.timing_mode == "zero" ? 0.0 : train_s;
        report.test_s = cfg.timing_mode == "zero" ? 0.0 : test_s;
        result.reports.push_back(report);
    }

    // ---- artifacts
    result.report_path = cfg.out_dir + "/report-" + cfg_hash + ".csv";
    export_report(result.reports, result.report_path, ReportFormat::csv);
    result.summary_path = cfg.out_dir + "/summary-" + cfg_hash + ".txt";
    {
        std::ofstream os(result.summary_path, std::ios::binary);
        os << "benign_accuracy " << result.benign_accuracy << "\n";
        for (const auto& kv : result.defended_benign_accuracy)
            os << "defended_benign_accuracy " << kv.first << " " << kv.second << "\n";
        for (const auto& kv : result.trends) {
            for (const TrendStage& t : kv.second)
                os << "trend " << kv.first << " " << t.name << " within_raw " << t.within_raw << " fsa "
                   << t.fsa << " fsd " << t.fsd << "\n";
        }
        if (cfg.timing_mode != "zero")
            for (const StageTiming& t : result.timings) os << "timing " << t.stage << " " << t.seconds << "\n";
    }
    return result;
}

}  // namespace sfelab
