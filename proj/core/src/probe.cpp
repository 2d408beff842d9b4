#include "msx/probe.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <vector>

#include "msx/errors.hpp"

namespace msx {

int CountThresholds::predict(std::uint64_t count) const {
    const auto c = static_cast<double>(count);
    int k = 0;
    for (int j = 1; j < kNumClasses; ++j) {
        if (c >= lower[j]) {
            k = j;
        }
    }
    return k;
}

CountThresholds fit_count_thresholds(std::span<const std::uint64_t> counts, std::span<const int> labels) {
    if (counts.size() != labels.size() || counts.empty()) {
        throw DomainError("probe: need equally many counts and labels, at least one");
    }
    std::vector<std::size_t> order(counts.size());
    for (std::size_t i = 0; i < order.size(); ++i) {
        order[i] = i;
        if (labels[i] < 0 || labels[i] >= kNumClasses) {
            throw DomainError("probe: label out of range");
        }
    }
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return counts[a] < counts[b]; });

    // Distinct count values and per-class prefix sums over them.
    std::vector<std::uint64_t> values;
    std::vector<std::array<int, kNumClasses>> prefix(1);
    prefix[0].fill(0);
    for (std::size_t i : order) {
        if (values.empty() || counts[i] != values.back()) {
            values.push_back(counts[i]);
            prefix.push_back(prefix.back());
        }
        ++prefix.back()[labels[i]];
    }
    const std::size_t G = values.size();

    // best[k][g]: most correct using classes 0..k over the first g values.
    // start[k][g]: where class k's run begins in that optimum.
    std::vector<std::vector<int>> best(kNumClasses, std::vector<int>(G + 1, 0));
    std::vector<std::vector<std::size_t>> start(kNumClasses, std::vector<std::size_t>(G + 1, 0));
    for (std::size_t g = 0; g <= G; ++g) {
        best[0][g] = prefix[g][0];
    }
    for (int k = 1; k < kNumClasses; ++k) {
        int run_best = std::numeric_limits<int>::min();
        std::size_t run_arg = 0;
        for (std::size_t g = 0; g <= G; ++g) {
            const int cand = best[k - 1][g] - prefix[g][k];
            if (cand > run_best) {
                run_best = cand;
                run_arg = g;
            }
            best[k][g] = run_best + prefix[g][k];
            start[k][g] = run_arg;
        }
    }

    CountThresholds out;
    out.lower[0] = -std::numeric_limits<double>::infinity();
    std::size_t g = G;
    for (int k = kNumClasses - 1; k >= 1; --k) {
        const std::size_t j = start[k][g];
        if (j == 0) {
            out.lower[k] = -std::numeric_limits<double>::infinity();
        } else if (j == G) {
            out.lower[k] = std::numeric_limits<double>::infinity();
        } else {
            out.lower[k] = 0.5 * (static_cast<double>(values[j - 1]) + static_cast<double>(values[j]));
        }
        g = j;
    }
    return out;
}

double threshold_accuracy(const CountThresholds& clf, std::span<const std::uint64_t> counts,
                          std::span<const int> labels) {
    if (counts.empty() || counts.size() != labels.size()) {
        throw DomainError("probe: need equally many counts and labels, at least one");
    }
    std::size_t hit = 0;
    for (std::size_t i = 0; i < counts.size(); ++i) {
        if (clf.predict(counts[i]) == labels[i]) {
            ++hit;
        }
    }
    return static_cast<double>(hit) / static_cast<double>(counts.size());
}

ProbeSide probe_manifest(const DatasetManifest& manifest, std::optional<Eye> eye) {
    auto gather = [&](Split split, std::vector<std::uint64_t>& counts, std::vector<int>& labels) {
        for (const SampleRecord* r : manifest.select(split, eye)) {
            counts.push_back(r->resampled_event_count);
            labels.push_back(r->class_id);
        }
    };
    std::vector<std::uint64_t> train_counts;
    std::vector<std::uint64_t> test_counts;
    std::vector<int> train_labels;
    std::vector<int> test_labels;
    gather(Split::Train, train_counts, train_labels);
    gather(Split::Test, test_counts, test_labels);
    if (train_counts.empty() || test_counts.empty()) {
        throw DomainError("probe: dataset has no train/test split");
    }
    ProbeSide side;
    side.thresholds = fit_count_thresholds(train_counts, train_labels);
    side.train_accuracy = threshold_accuracy(side.thresholds, train_counts, train_labels);
    side.test_accuracy = threshold_accuracy(side.thresholds, test_counts, test_labels);
    side.train_samples = static_cast<int>(train_counts.size());
    side.test_samples = static_cast<int>(test_counts.size());
    return side;
}

ProbeReport count_bias_probe(const std::optional<DatasetManifest>& pre, const DatasetManifest& post,
                             std::optional<Eye> eye) {
    if (!pre) {
        throw DomainError("probe: pre-resampling dataset is missing");
    }
    if (pre->resampled) {
        throw DomainError("probe: the pre dataset was built with resampling");
    }
    if (!post.resampled) {
        throw DomainError("probe: the post dataset was built without resampling");
    }
    return ProbeReport{probe_manifest(*pre, eye), probe_manifest(post, eye)};
}

std::string format_probe_text(const ProbeReport& r) {
    std::ostringstream out;
    out << std::fixed << std::setprecision(4);
    out << "count probe      train_acc  test_acc  n_train  n_test\n";
    auto row = [&](const char* name, const ProbeSide& s) {
        out << std::left << std::setw(16) << name << std::right << std::setw(10) << s.train_accuracy << std::setw(10)
            << s.test_accuracy << std::setw(9) << s.train_samples << std::setw(8) << s.test_samples << '\n';
    };
    row("pre-resampling", r.pre);
    row("post-resampling", r.post);
    out << "chance " << 1.0 / kNumClasses << '\n';
    return out.str();
}

void write_probe_csv(const ProbeReport& r, const std::filesystem::path& path) {
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw std::runtime_error("cannot open " + path.string());
    }
    out << std::setprecision(9) << "dataset,train_accuracy,test_accuracy,train_samples,test_samples";
    for (int k = 1; k < kNumClasses; ++k) {
        out << ",lower_" << k;
    }
    out << '\n';
    auto row = [&](const char* name, const ProbeSide& s) {
        out << name << ',' << s.train_accuracy << ',' << s.test_accuracy << ',' << s.train_samples << ','
            << s.test_samples;
        for (int k = 1; k < kNumClasses; ++k) {
            out << ',' << s.thresholds.lower[k];
        }
        out << '\n';
    };
    row("pre", r.pre);
    row("post", r.post);
}

}  // namespace msx
