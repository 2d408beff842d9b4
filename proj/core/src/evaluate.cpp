#include "msx/evaluate.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>

#include "msx/errors.hpp"
#include "msx/snn/checkpoint.hpp"
#include "msx/snn/train.hpp"

namespace msx {

EvaluationReport evaluate_checkpoint(const std::filesystem::path& checkpoint, const DatasetManifest& manifest,
                                     const std::filesystem::path& root, Split split, int workers) {
    snn::LoadedCheckpoint ck = snn::load_checkpoint(checkpoint);
    const snn::ModelConfig& mc = ck.model->config();
    if (mc.height != manifest.roi.height || mc.width != manifest.roi.width) {
        throw DomainError("evaluate: checkpoint input " + std::to_string(mc.width) + "x" + std::to_string(mc.height) +
                          " does not match the dataset ROI " + std::to_string(manifest.roi.width) + "x" +
                          std::to_string(manifest.roi.height));
    }
    snn::ExampleOptions opts;
    opts.bins = ck.meta.value("bins", mc.steps);
    opts.window_ns = ck.meta.value("window_ns", kDefaultWindowNs);
    opts.workers = workers;
    if (opts.bins != mc.steps) {
        throw DomainError("evaluate: checkpoint binning disagrees with its model steps");
    }

    EvaluationReport report;
    report.eye = eye_from_string(ck.meta.value("eye", std::string("left")));
    report.split = split;
    const auto records = manifest.select(split, report.eye);
    if (records.empty()) {
        throw DomainError("evaluate: split '" + std::string(to_string(split)) + "' is empty for the " +
                          std::string(to_string(report.eye)) + " eye");
    }
    const std::vector<snn::Example> examples = snn::load_examples(root, records, opts);
    const snn::Evaluation ev = snn::evaluate_examples(*ck.model, examples);
    for (std::size_t i = 0; i < examples.size(); ++i) {
        report.sample_paths.push_back(records[i]->path);
        report.truth.push_back(examples[i].label);
        report.predicted.push_back(ev.predicted[i]);
        report.confidence.push_back(*std::max_element(ev.probabilities[i].begin(), ev.probabilities[i].end()));
    }
    report.metrics = compute_metrics(report.truth, report.predicted);
    return report;
}

void write_predictions_csv(const EvaluationReport& report, const std::filesystem::path& path) {
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw std::runtime_error("cannot open " + path.string());
    }
    out << "path,true,predicted,confidence\n" << std::setprecision(9);
    for (std::size_t i = 0; i < report.truth.size(); ++i) {
        out << report.sample_paths[i] << ',' << report.truth[i] << ',' << report.predicted[i] << ','
            << report.confidence[i] << '\n';
    }
}

}  // namespace msx
