// Copyright 2026 sfelab contributors
// SPDX-License-Identifier: Apache-2.0

#include "sfelab/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace sfelab {

std::vector<int> defend(Classifier& clf, SfeModel& sfe, const Tensor& images) {
    const Tensor features = clf.extract_feature(images);
    const Tensor salient = generate_sf(sfe, features);
    return clf.classify_from_feature(salient).labels;
}

std::optional<double> defense_success_rate(Classifier& clf, SfeModel& sfe, const PairDataset& pairs) {
    const PairDataset ok = pairs.successful();
    if (ok.count() == 0) return std::nullopt;
    const std::vector<int> defended = defend(clf, sfe, ok.adversarial);
    int correct = 0;
    for (int i = 0; i < ok.count(); ++i)
        correct += defended[static_cast<size_t>(i)] == ok.benign.labels[static_cast<size_t>(i)] ? 1 : 0;
    return static_cast<double>(correct) / ok.count();
}

double detection_rate(AdvDetector& det, SfeModel& sfe, Classifier& clf, const PairDataset& pairs) {
    if (pairs.count() == 0) return 0.0;
    const DetectionResult on_benign = detect(det, sfe, clf, pairs.benign.images);
    const DetectionResult on_adv = detect(det, sfe, clf, pairs.adversarial);
    int correct = 0;
    for (int i = 0; i < pairs.count(); ++i) {
        correct += on_benign.verdicts[static_cast<size_t>(i)] == 0 ? 1 : 0;
        correct += on_adv.verdicts[static_cast<size_t>(i)] == 1 ? 1 : 0;
    }
    return static_cast<double>(correct) / (2.0 * pairs.count());
}

// ---------------------------------------------------------------------------
// feature-space metrics

namespace {

struct ClassCenters {
    std::vector<std::vector<double>> center;  // [k][d]
    std::vector<int> count;                   // [k]
};

ClassCenters class_centers(const Tensor& features, const std::vector<int>& labels, int num_classes) {
    if (features.rank() != 2) throw std::invalid_argument("feature metrics: expected [N, d]");
    if (features.dim(0) != static_cast<int>(labels.size()))
        throw std::invalid_argument("feature metrics: label count mismatch");
    const int d = features.dim(1);
    ClassCenters cc;
    cc.center.assign(static_cast<size_t>(num_classes), std::vector<double>(static_cast<size_t>(d), 0.0));
    cc.count.assign(static_cast<size_t>(num_classes), 0);
    for (int i = 0; i < features.dim(0); ++i) {
        const int k = labels[static_cast<size_t>(i)];
        if (k < 0 || k >= num_classes) throw std::out_of_range("feature metrics: label out of range");
        ++cc.count[static_cast<size_t>(k)];
        for (int j = 0; j < d; ++j) cc.center[static_cast<size_t>(k)][static_cast<size_t>(j)] += features.at(i, j);
    }
    for (int k = 0; k < num_classes; ++k)
        if (cc.count[static_cast<size_t>(k)] > 0)
            for (int j = 0; j < d; ++j) cc.center[static_cast<size_t>(k)][static_cast<size_t>(j)] /= cc.count[static_cast<size_t>(k)];
    return cc;
}

std::vector<double> within_class_distances(const Tensor& features, const std::vector<int>& labels,
                                           int num_classes) {
    const ClassCenters cc = class_centers(features, labels, num_classes);
    const int d = features.dim(1);
    std::vector<double> dist(static_cast<size_t>(num_classes), 0.0);
    for (int i = 0; i < features.dim(0); ++i) {
        const int k = labels[static_cast<size_t>(i)];
        double s = 0.0;
        for (int j = 0; j < d; ++j) {
            const double delta = features.at(i, j) - cc.center[static_cast<size_t>(k)][static_cast<size_t>(j)];
            s += delta * delta;
        }
        dist[static_cast<size_t>(k)] += std::sqrt(s);
    }
    for (int k = 0; k < num_classes; ++k) {
        if (cc.count[static_cast<size_t>(k)] > 0)
            dist[static_cast<size_t>(k)] /= cc.count[static_cast<size_t>(k)];
        else
            dist[static_cast<size_t>(k)] = -1.0;  // empty class, excluded
    }
    return dist;
}

}  // namespace

FsaResult fsa(const Tensor& features, const std::vector<int>& labels, int num_classes) {
    FsaResult res;
    res.class_distance = within_class_distances(features, labels, num_classes);
    double lo = std::numeric_limits<double>::max();
    double hi = std::numeric_limits<double>::lowest();
    int nonempty = 0;
    for (double v : res.class_distance) {
        if (v < 0.0) continue;
        lo = std::min(lo, v);
        hi = std::max(hi, v);
        ++nonempty;
    }
    if (nonempty == 0) throw std::invalid_argument("fsa: every class is empty");
    const double span = std::max(hi - lo, 1e-12);
    res.fsa_k.assign(res.class_distance.size(), -1.0);
    double acc = 0.0, racc = 0.0;
    for (size_t k = 0; k < res.class_distance.size(); ++k) {
        if (res.class_distance[k] < 0.0) continue;
        const double normalized = hi > lo ? (res.class_distance[k] - lo) / span : 0.0;
        res.fsa_k[k] = 1.0 - normalized;
        acc += res.fsa_k[k];
        racc += res.class_distance[k];
    }
    res.fsa = acc / nonempty;
    res.mean_distance = racc / nonempty;
    return res;
}

double fsd(const Tensor& features, const std::vector<int>& labels, int num_classes) {
    const ClassCenters cc = class_centers(features, labels, num_classes);
    const int d = features.dim(1);
    std::vector<int> present;
    for (int k = 0; k < num_classes; ++k)
        if (cc.count[static_cast<size_t>(k)] > 0) present.push_back(k);
    if (present.size() < 2) throw std::invalid_argument("fsd: needs at least two nonempty classes");
    double sum = 0.0;
    int pairs = 0;
    for (size_t a = 0; a < present.size(); ++a)
        for (size_t b = a + 1; b < present.size(); ++b) {
            double s = 0.0;
            for (int j = 0; j < d; ++j) {
                const double delta = cc.center[static_cast<size_t>(present[a])][static_cast<size_t>(j)] -
                                     cc.center[static_cast<size_t>(present[b])][static_cast<size_t>(j)];
                s += delta * delta;
            }
            sum += std::sqrt(s);
            ++pairs;
        }
    return sum / pairs;
}

std::vector<TrendStage> trend_analysis(Classifier& clf, SfeModel& sfe, const PairDataset& pairs,
                                       int num_classes) {
    const PairDataset ok = pairs.successful();
    if (ok.count() == 0) throw std::invalid_argument("trend_analysis: no successful pairs");
    const std::vector<int>& labels = ok.benign.labels;

    const Tensor benign_feat = clf.extract_feature(ok.benign.images);
    const Tensor adv_feat = clf.extract_feature(ok.adversarial);
    const Tensor defended_adv = generate_sf(sfe, adv_feat);
    const Tensor defended_benign = generate_sf(sfe, benign_feat);

    const struct {
        const char* name;
        const Tensor* feats;
    } stages[] = {{"benign", &benign_feat},
                  {"adversarial", &adv_feat},
                  {"defended_adversarial", &defended_adv},
                  {"defended_benign", &defended_benign}};

    std::vector<TrendStage> out;
    double lo = std::numeric_limits<double>::max(), hi = std::numeric_limits<double>::lowest();
    for (const auto& stage : stages) {
        TrendStage t;
        t.name = stage.name;
        const std::vector<double> dist = within_class_distances(*stage.feats, labels, num_classes);
        double acc = 0.0;
        int nonempty = 0;
        for (double v : dist) {
            if (v < 0.0) continue;
            acc += v;
            ++nonempty;
        }
        t.within_raw = acc / std::max(1, nonempty);
        t.fsd = fsd(*stage.feats, labels, num_classes);
        lo = std::min(lo, t.within_raw);
        hi = std::max(hi, t.within_raw);
        out.push_back(t);
    }
    // one normalization shared by all stages of the experiment
    const double span = std::max(hi - lo, 1e-12);
    for (TrendStage& t : out) {
        t.within_normalized = hi > lo ? (t.within_raw - lo) / span : 0.0;
        t.fsa = 1.0 - t.within_normalized;
    }
    return out;
}

// ---------------------------------------------------------------------------
// reports

namespace {

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

std::string format_report_row(const EvalReport& r) {
    std::ostringstream os;
    os << r.experiment_id << "," << r.model << "," << r.attack << "," << fmt_double(r.eps) << ","
       << fmt_double(r.acc) << "," << fmt_double(r.asr) << "," << fmt_double(r.dr) << ","
       << fmt_double(r.dsr) << "," << fmt_double(r.rho_l2) << "," << fmt_double(r.rho_px) << ","
       << fmt_double(r.fsa) << "," << fmt_double(r.fsd) << "," << fmt_double(r.train_s) << ","
       << fmt_double(r.test_s) << "," << r.seed;
    return os.str();
}

void export_report(const std::vector<EvalReport>& reports, const std::string& path, ReportFormat format) {
    std::ofstream os(path, std::ios::binary);  // binary: byte-stable line endings
    if (!os) throw std::runtime_error("export_report: cannot open '" + path + "'");
    if (format == ReportFormat::csv) {
        os << kReportHeader << "\n";
        for (const EvalReport& r : reports) os << format_report_row(r) << "\n";
    } else {
        for (const EvalReport& r : reports) {
            os << "experiment " << r.experiment_id << "\n"
               << "  model " << r.model << "\n"
               << "  attack " << r.attack << "\n"
               << "  eps " << fmt_double(r.eps) << "\n"
               << "  acc " << fmt_double(r.acc) << "\n"
               << "  asr " << fmt_double(r.asr) << "\n"
               << "  dr " << fmt_double(r.dr) << "\n"
               << "  dsr " << fmt_double(r.dsr) << "\n"
               << "  rho_l2 " << fmt_double(r.rho_l2) << "\n"
               << "  rho_px " << fmt_double(r.rho_px) << "\n"
               << "  fsa " << fmt_double(r.fsa) << "\n"
               << "  fsd " << fmt_double(r.fsd) << "\n"
               << "  train_s " << fmt_double(r.train_s) << "\n"
               << "  test_s " << fmt_double(r.test_s) << "\n"
               << "  seed " << r.seed << "\n";
        }
    }
    if (!os) throw std::runtime_error("export_report: write failed for '" + path + "'");
}

std::vector<EvalReport> parse_report_csv(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("parse_report_csv: cannot open '" + path + "'");
    std::string line;
    if (!std::getline(is, line)) throw std::runtime_error("parse_report_csv: empty file");
    if (line != kReportHeader) throw std::runtime_error("parse_report_csv: unexpected header '" + line + "'");
    std::vector<EvalReport> out;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::vector<std::string> cols;
        std::istringstream ls(line);
        std::string col;
        while (std::getline(ls, col, ',')) cols.push_back(col);
        if (cols.size() != 15) throw std::runtime_error("parse_report_csv: malformed row '" + line + "'");
        EvalReport r;
        r.experiment_id = cols[0];
        r.model = cols[1];
        r.attack = cols[2];
        r.eps = std::stod(cols[3]);
        r.acc = std::stod(cols[4]);
        r.asr = std::stod(cols[5]);
        r.dr = std::stod(cols[6]);
        r.dsr = std::stod(cols[7]);
        r.rho_l2 = std::stod(cols[8]);
        r.rho_px = std::stod(cols[9]);
        r.fsa = std::stod(cols[10]);
        r.fsd = std::stod(cols[11]);
        r.train_s = std::stod(cols[12]);
        r.test_s = std::stod(cols[13]);
        r.seed = std::stoull(cols[14]);
        out.push_back(std::move(r));
    }
    return out;
}

std::vector<TransferCell> transfer_matrix(Classifier& clf, SfeModel& sfe, AdvDetector& det,
                                          const std::string& train_attack,
                                          const std::vector<const PairDataset*>& test_sets) {
    std::vector<TransferCell> out;
    for (const PairDataset* pairs : test_sets) {
        TransferCell cell;
        cell.train_attack = train_attack;
        cell.test_attack = pairs->attack_name;
        cell.dr = detection_rate(det, sfe, clf, *pairs);
        const std::optional<double> dsr = defense_success_rate(clf, sfe, *pairs);
        cell.dsr_defined = dsr.has_value();
        cell.dsr = dsr.value_or(0.0);
        out.push_back(std::move(cell));
    }
    return out;
}

}  // namespace sfelab
