// Copyright 2026 sfelab contributors
// SPDX-License-Identifier: Apache-2.0
//
// sfelab: train the targeted model, craft adversarial examples, train the
// coupled-GAN feature extractor and detector, then measure detection and
// re-identification defense.

#include <CLI11.hpp>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "sfelab/attacks.hpp"
#include "sfelab/mnist.hpp"
#include "sfelab/pipeline.hpp"

using namespace sfelab;

namespace {

struct GlobalArgs {
    std::string config_path;
    std::string data_dir;
    std::string out_dir;
    std::uint64_t seed = 0;
    bool seed_set = false;
    int threads = 0;
};

/// --data-dir flag, then SFELAB_DATA_DIR, then the config default.
ExperimentConfig resolve_config(const GlobalArgs& g) {
    ExperimentConfig cfg = parse_config(g.config_path);
    if (!g.data_dir.empty()) {
        cfg.data_dir = g.data_dir;
    } else if (const char* env = std::getenv("SFELAB_DATA_DIR")) {
        cfg.data_dir = env;
    }
    if (g.seed_set) cfg.seed = g.seed;
    if (!g.out_dir.empty()) cfg.out_dir = g.out_dir;
    if (g.threads > 0) cfg.threads = g.threads;
    cfg.validate();
    return cfg;
}

ImageSet load_eval_set(const ExperimentConfig& cfg, const std::string& which) {
    const MnistData mnist = load_mnist(cfg.data_dir);
    const ImageSet& base = which == "train" ? mnist.train : mnist.test;
    const int cap = which == "train" ? cfg.train_subset : cfg.test_subset;
    return cap > 0 && cap < base.count() ? base.subset(0, cap) : base;
}

void print_report_rows(const std::vector<EvalReport>& rows) {
    std::printf("%s\n", kReportHeader);
    for (const EvalReport& r : rows) std::printf("%s\n", format_report_row(r).c_str());
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"salient-feature extraction laboratory"};
    app.require_subcommand(1);

    GlobalArgs g;
    app.add_option("--config", g.config_path, "experiment config file (section-based key=value)");
    app.add_option("--data-dir", g.data_dir, "dataset root (falls back to $SFELAB_DATA_DIR)");
    app.add_option("--out-dir", g.out_dir, "artifact directory");
    app.add_option("--seed", g.seed, "global seed")->each([&](const std::string&) { g.seed_set = true; });
    app.add_option("--threads", g.threads, "worker threads for independent attacks");

    // ---- train-target
    auto* cmd_target = app.add_subcommand("train-target", "train the targeted classifier");
    std::string target_out = "target.sfel";
    cmd_target->add_option("--out", target_out, "checkpoint path");

    // ---- attack
    auto* cmd_attack = app.add_subcommand("attack", "craft adversarial pairs");
    std::string atk_model, atk_method = "bim", atk_out = "pairs.sfel", atk_set = "test";
    double atk_eps = -1.0, atk_step = -1.0, atk_decay = -1.0;
    int atk_iters = -1, atk_count = 0;
    std::uint64_t atk_seed = 0;
    bool atk_seed_set = false;
    cmd_attack->add_option("--model", atk_model, "classifier checkpoint")->required();
    cmd_attack->add_option("--method", atk_method, "fgsm|bim|mifgsm|pgd|deepfool|auna|cra|pwa");
    cmd_attack->add_option("--eps", atk_eps, "epsilon override");
    cmd_attack->add_option("--step", atk_step, "step size override");
    cmd_attack->add_option("--iters", atk_iters, "iteration override");
    cmd_attack->add_option("--decay", atk_decay, "momentum decay override");
    cmd_attack->add_option("--count", atk_count, "max images to attack (0 = all)");
    cmd_attack->add_option("--set", atk_set, "train|test source split");
    cmd_attack->add_option("--attack-seed", atk_seed, "attack randomness seed")
        ->each([&](const std::string&) { atk_seed_set = true; });
    cmd_attack->add_option("--out", atk_out, "pairs file");

    // ---- train-sfe
    auto* cmd_sfe = app.add_subcommand("train-sfe", "train the salient feature extractor");
    std::string sfe_pairs, sfe_model, sfe_out = "sfe.sfel";
    int sfe_kd = -1, sfe_mb = -1, sfe_iters = -1;
    cmd_sfe->add_option("--pairs", sfe_pairs, "pairs file")->required();
    cmd_sfe->add_option("--model", sfe_model, "classifier checkpoint")->required();
    cmd_sfe->add_option("--kd", sfe_kd, "discriminator pretraining steps");
    cmd_sfe->add_option("--mb", sfe_mb, "minibatch size");
    cmd_sfe->add_option("--iters", sfe_iters, "training iterations");
    cmd_sfe->add_option("--out", sfe_out, "checkpoint path");

    // ---- train-advd
    auto* cmd_advd = app.add_subcommand("train-advd", "train the adversarial detector");
    std::string advd_sfe, advd_pairs, advd_model, advd_out = "advd.sfel";
    cmd_advd->add_option("--sfe", advd_sfe, "sfe checkpoint")->required();
    cmd_advd->add_option("--pairs", advd_pairs, "pairs file")->required();
    cmd_advd->add_option("--model", advd_model, "classifier checkpoint")->required();
    cmd_advd->add_option("--out", advd_out, "checkpoint path");

    // ---- detect
    auto* cmd_detect = app.add_subcommand("detect", "score a pair file with the detector");
    std::string det_model, det_sfe, det_advd, det_pairs, det_report = "detect.csv";
    double det_threshold = -1.0;
    cmd_detect->add_option("--model", det_model)->required();
    cmd_detect->add_option("--sfe", det_sfe)->required();
    cmd_detect->add_option("--advd", det_advd)->required();
    cmd_detect->add_option("--pairs", det_pairs)->required();
    cmd_detect->add_option("--threshold", det_threshold, "verdict threshold");
    cmd_detect->add_option("--report", det_report, "per-image verdict csv");

    // ---- defend
    auto* cmd_defend = app.add_subcommand("defend", "re-identify a pair file through the defense");
    std::string def_model, def_sfe, def_pairs, def_out = "defend.csv";
    cmd_defend->add_option("--model", def_model)->required();
    cmd_defend->add_option("--sfe", def_sfe)->required();
    cmd_defend->add_option("--pairs", def_pairs)->required();
    cmd_defend->add_option("--out", def_out, "per-image label csv");

    // ---- evaluate
    auto* cmd_eval = app.add_subcommand("evaluate", "full metric row for one pair file");
    std::string ev_model, ev_sfe, ev_advd, ev_pairs, ev_out = "report.csv";
    cmd_eval->add_option("--model", ev_model)->required();
    cmd_eval->add_option("--sfe", ev_sfe)->required();
    cmd_eval->add_option("--advd", ev_advd)->required();
    cmd_eval->add_option("--pairs", ev_pairs)->required();
    cmd_eval->add_option("--out", ev_out, "report csv");

    // ---- transfer
    auto* cmd_transfer = app.add_subcommand("transfer", "cross-attack detection/defense matrix");
    std::string tr_train_attack = "bim";
    std::vector<std::string> tr_test_attacks = {"fgsm", "pgd"};
    std::string tr_out = "transfer.csv";
    cmd_transfer->add_option("--train-attack", tr_train_attack, "attack the defense is trained on");
    cmd_transfer->add_option("--test-attacks", tr_test_attacks, "attacks to evaluate against");
    cmd_transfer->add_option("--out", tr_out, "matrix csv");

    // ---- run
    auto* cmd_run = app.add_subcommand("run", "full staged pipeline with caching");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*cmd_target) {
            ExperimentConfig cfg = resolve_config(g);
            const ImageSet train = load_eval_set(cfg, "train");
            const ImageSet test = load_eval_set(cfg, "test");
            Classifier clf = build_cnn(cfg.model, stage_seed(cfg, "target-init"),
                                       cfg.tap == "logits" ? FeatureTap::logits : FeatureTap::dense128);
            const auto log = train_classifier(clf, train, cfg.epochs, cfg.batch,
                                              stage_seed(cfg, "target-train"));
            for (const auto& e : log)
                std::printf("epoch %d loss %.4f train-acc %.4f (%.1fs)\n", e.epoch, e.mean_loss,
                            e.train_accuracy, e.seconds);
            std::printf("test accuracy %.4f\n", accuracy(clf, test));
            save_classifier(clf, target_out);
            std::printf("saved %s\n", target_out.c_str());
        } else if (*cmd_attack) {
            ExperimentConfig cfg = resolve_config(g);
            Classifier clf = load_classifier(atk_model);
            AttackSpec spec = AttackSpec::preset(atk_method);
            if (atk_eps >= 0) spec.epsilon = static_cast<float>(atk_eps);
            if (atk_step >= 0) spec.step_size = static_cast<float>(atk_step);
            if (atk_iters >= 0) {
                spec.iterations = atk_iters;
                spec.max_iter = atk_iters;
            }
            if (atk_decay >= 0) spec.decay_factor = static_cast<float>(atk_decay);
            spec.seed = atk_seed_set ? atk_seed : stage_seed(cfg, "attack-" + atk_method);
            const ImageSet set = load_eval_set(cfg, atk_set);
            AttackRunStats stats;
            const PairDataset pairs = run_attack(clf, set, spec, atk_count, &stats);
            save_pairs(pairs, atk_out);
            std::printf("%s: attacked %d asr %.4f rho_l2 %.4f rho_px %.5f -> %s\n", atk_method.c_str(),
                        stats.attacked, stats.asr, stats.mean_rho_l2, stats.mean_rho_pixel,
                        atk_out.c_str());
        } else if (*cmd_sfe) {
            ExperimentConfig cfg = resolve_config(g);
            Classifier clf = load_classifier(sfe_model);
            const PairDataset pairs = load_pairs(sfe_pairs);
            const FeaturePairSet feats = extract_feature_pairs(clf, pairs);
            SfeModel sfe = build_sfe(clf.tap_dim(), stage_seed(cfg, "sfe-init"),
                                     cfg.disc_output == "sigmoid" ? DiscOutput::sigmoid
                                                                  : DiscOutput::tanh_unit);
            const int kd = sfe_kd >= 0 ? sfe_kd : cfg.kd;
            const int mb = sfe_mb > 0 ? sfe_mb : cfg.mb;
            const int iters = sfe_iters >= 0 ? sfe_iters : cfg.iterations;
            sfe.k_d = kd;
            sfe.minibatch = mb;
            pretrain_discriminator(sfe, feats, kd, mb, stage_seed(cfg, "sfe-pre"));
            const auto log = train_sfe(sfe, feats, iters, mb, stage_seed(cfg, "sfe-train"));
            if (!log.empty())
                std::printf("iter %d loss_pg %.4f loss_ng %.4f loss_d %.4f\n", log.back().iteration,
                            log.back().loss_pg, log.back().loss_ng, log.back().loss_d);
            save_sfe(sfe, sfe_out);
            std::printf("saved %s\n", sfe_out.c_str());
        } else if (*cmd_advd) {
            ExperimentConfig cfg = resolve_config(g);
            Classifier clf = load_classifier(advd_model);
            SfeModel sfe = load_sfe(advd_sfe);
            const PairDataset pairs = load_pairs(advd_pairs).successful();
            AdvDetector det = build_detector(clf.tap_dim(), stage_seed(cfg, "advd-init"));
            det.set_threshold(static_cast<float>(cfg.threshold));
            const auto log = train_advd(det, sfe, clf, pairs, cfg.advd_epochs, cfg.advd_batch,
                                        stage_seed(cfg, "advd-train"));
            if (!log.empty())
                std::printf("epoch %d loss %.4f train-acc %.4f\n", log.back().epoch, log.back().mean_loss,
                            log.back().train_accuracy);
            save_detector(det, advd_out);
            std::printf("saved %s\n", advd_out.c_str());
        } else if (*cmd_detect) {
            Classifier clf = load_classifier(det_model);
            SfeModel sfe = load_sfe(det_sfe);
            AdvDetector det = load_detector(det_advd);
            if (det_threshold >= 0) det.set_threshold(static_cast<float>(det_threshold));
            const PairDataset pairs = load_pairs(det_pairs);
            const DetectionResult rb = detect(det, sfe, clf, pairs.benign.images);
            const DetectionResult ra = detect(det, sfe, clf, pairs.adversarial);
            std::ofstream os(det_report, std::ios::binary);
            os << "index,kind,score,verdict\n";
            for (int i = 0; i < pairs.count(); ++i) {
                os << i << ",benign," << rb.scores[static_cast<size_t>(i)] << ","
                   << int(rb.verdicts[static_cast<size_t>(i)]) << "\n";
                os << i << ",adversarial," << ra.scores[static_cast<size_t>(i)] << ","
                   << int(ra.verdicts[static_cast<size_t>(i)]) << "\n";
            }
            std::printf("DR %.4f -> %s\n", detection_rate(det, sfe, clf, pairs), det_report.c_str());
        } else if (*cmd_defend) {
            Classifier clf = load_classifier(def_model);
            SfeModel sfe = load_sfe(def_sfe);
            const PairDataset pairs = load_pairs(def_pairs);
            const std::vector<int> benign_labels = defend(clf, sfe, pairs.benign.images);
            const std::vector<int> adv_labels = defend(clf, sfe, pairs.adversarial);
            std::ofstream os(def_out, std::ios::binary);
            os << "index,true_label,defended_benign,defended_adversarial,success_flag\n";
            for (int i = 0; i < pairs.count(); ++i)
                os << i << "," << pairs.benign.labels[static_cast<size_t>(i)] << ","
                   << benign_labels[static_cast<size_t>(i)] << "," << adv_labels[static_cast<size_t>(i)]
                   << "," << int(pairs.success[static_cast<size_t>(i)]) << "\n";
            const auto dsr = defense_success_rate(clf, sfe, pairs);
            if (dsr)
                std::printf("DSR %.4f -> %s\n", *dsr, def_out.c_str());
            else
                std::printf("DSR undefined (no successful pairs) -> %s\n", def_out.c_str());
        } else if (*cmd_eval) {
            ExperimentConfig cfg = resolve_config(g);
            Classifier clf = load_classifier(ev_model);
            SfeModel sfe = load_sfe(ev_sfe);
            AdvDetector det = load_detector(ev_advd);
            const PairDataset pairs = load_pairs(ev_pairs);
            const ImageSet test = load_eval_set(cfg, "test");
            EvalReport r;
            r.experiment_id = cfg.hash() + "-" + pairs.attack_name;
            r.model = clf.name();
            r.attack = pairs.attack_name;
            r.acc = accuracy(clf, test);
            r.asr = pairs.count() ? static_cast<double>(pairs.success_count()) / pairs.count() : 0.0;
            r.dr = detection_rate(det, sfe, clf, pairs);
            r.dsr = defense_success_rate(clf, sfe, pairs).value_or(0.0);
            const Tensor adv_feat = clf.extract_feature(pairs.adversarial);
            r.fsa = fsa(adv_feat, pairs.benign.labels, 10).fsa;
            r.fsd = fsd(adv_feat, pairs.benign.labels, 10);
            r.seed = cfg.seed;
            export_report({r}, ev_out);
            print_report_rows({r});
        } else if (*cmd_transfer) {
            ExperimentConfig cfg = resolve_config(g);
            cfg.methods = {tr_train_attack};
            for (const std::string& t : tr_test_attacks)
                if (t != tr_train_attack) cfg.methods.push_back(t);
            const PipelineResult base = run_pipeline(cfg);  // trains the stack, caches pairs

            // reload the trained stack for the train attack
            Classifier clf = load_classifier(cfg.out_dir + "/" + [&] {
                for (const auto& e : std::filesystem::directory_iterator(cfg.out_dir))
                    if (e.path().filename().string().rfind("target-", 0) == 0)
                        return e.path().filename().string();
                throw std::runtime_error("transfer: target checkpoint missing");
            }());
            std::vector<PairDataset> tests;
            SfeModel sfe;
            AdvDetector det;
            bool have_stack = false;
            for (const auto& e : std::filesystem::directory_iterator(cfg.out_dir)) {
                const std::string name = e.path().filename().string();
                if (name.rfind("sfe-" + tr_train_attack, 0) == 0) {
                    sfe = load_sfe(e.path().string());
                    have_stack = true;
                }
                if (name.rfind("advd-" + tr_train_attack, 0) == 0) det = load_detector(e.path().string());
            }
            if (!have_stack) throw std::runtime_error("transfer: trained sfe missing for " + tr_train_attack);
            for (const std::string& t : tr_test_attacks)
                for (const auto& e : std::filesystem::directory_iterator(cfg.out_dir)) {
                    const std::string name = e.path().filename().string();
                    if (name.rfind("pairs-" + t + "-", 0) == 0) tests.push_back(load_pairs(e.path().string()));
                }
            std::vector<const PairDataset*> refs;
            for (const auto& t : tests) refs.push_back(&t);
            const auto cells = transfer_matrix(clf, sfe, det, tr_train_attack, refs);
            std::ofstream os(tr_out, std::ios::binary);
            os << "train_attack,test_attack,dr,dsr\n";
            for (const TransferCell& c : cells) {
                os << c.train_attack << "," << c.test_attack << "," << c.dr << "," << c.dsr << "\n";
                std::printf("train %s test %s DR %.4f DSR %.4f\n", c.train_attack.c_str(),
                            c.test_attack.c_str(), c.dr, c.dsr);
            }
        } else if (*cmd_run) {
            const ExperimentConfig cfg = resolve_config(g);
            const PipelineResult result = run_pipeline(cfg);
            std::printf("benign accuracy %.4f\n", result.benign_accuracy);
            print_report_rows(result.reports);
            for (const auto& kv : result.defended_benign_accuracy)
                std::printf("defended benign accuracy [%s] %.4f\n", kv.first.c_str(), kv.second);
            for (const StageTiming& t : result.timings)
                std::printf("stage %-14s %.1fs\n", t.stage.c_str(), t.seconds);
            std::printf("report %s\n", result.report_path.c_str());
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
