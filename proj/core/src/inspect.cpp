#include "msx/inspect.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include "msx/digest.hpp"
#include "msx/errors.hpp"
#include "msx/parallel.hpp"

namespace msx {

bool InspectReport::ok() const {
    return std::all_of(checks.begin(), checks.end(), [](const InvariantCheck& c) { return c.passed; });
}

namespace {

void fill_histogram(Histogram& h, double v) {
    const double span = h.hi - h.lo;
    int bin = span > 0.0 ? static_cast<int>((v - h.lo) / span * kHistogramBins) : 0;
    bin = std::clamp(bin, 0, kHistogramBins - 1);
    ++h.counts[bin];
}

}  // namespace

InspectReport inspect_dataset(const DatasetManifest& manifest, const std::filesystem::path& root, bool verify_files,
                              int workers) {
    if (verify_files) {
        std::vector<std::string> bad(manifest.samples.size());
        parallel_for(manifest.samples.size(), workers, [&](std::size_t i) {
            const SampleRecord& r = manifest.samples[i];
            const std::filesystem::path p = root / r.path;
            if (!std::filesystem::exists(p)) {
                bad[i] = "missing sample file " + r.path;
            } else if (sha256_file(p) != r.digest) {
                bad[i] = "digest mismatch for " + r.path;
            }
        });
        for (const std::string& b : bad) {
            if (!b.empty()) {
                throw IntegrityError(b);
            }
        }
    }

    InspectReport rep;
    rep.samples = manifest.samples.size();
    if (manifest.samples.empty()) {
        rep.checks.push_back({"non-empty", false, "manifest lists no samples"});
        return rep;
    }

    ClassTable table = default_class_table();
    if (manifest.config.is_object()) {
        table = dataset_config_from_json(manifest.config).scene.classes;
    }

    double ev_lo = std::numeric_limits<double>::infinity();
    double ev_hi = -ev_lo;
    double du_lo = ev_lo;
    double du_hi = -ev_lo;
    std::array<double, kNumClasses> sums{};
    for (int k = 0; k < kNumClasses; ++k) {
        rep.classes[k].class_id = k;
        rep.classes[k].min_events = std::numeric_limits<std::uint64_t>::max();
        rep.classes[k].min_duration_ms = std::numeric_limits<double>::infinity();
    }
    int out_of_range = 0;
    std::string range_detail;
    for (const SampleRecord& r : manifest.samples) {
        ClassStats& c = rep.classes[r.class_id];
        ++c.per_eye[static_cast<int>(r.eye)];
        const std::uint64_t n = r.resampled_event_count;
        const double ms = static_cast<double>(r.duration_ns) * 1e-6;
        c.min_events = std::min(c.min_events, n);
        c.max_events = std::max(c.max_events, n);
        c.min_duration_ms = std::min(c.min_duration_ms, ms);
        c.max_duration_ms = std::max(c.max_duration_ms, ms);
        sums[r.class_id] += static_cast<double>(n);
        ev_lo = std::min(ev_lo, static_cast<double>(n));
        ev_hi = std::max(ev_hi, static_cast<double>(n));
        du_lo = std::min(du_lo, ms);
        du_hi = std::max(du_hi, ms);
        const ClassSpec& spec = table[r.class_id];
        // Durations are stored in whole nanoseconds and amplitudes in millidegrees.
        const bool dur_ok = ms >= spec.duration_lo_ms - 1e-6 && ms <= spec.duration_hi_ms + 1e-6;
        const bool amp_ok = r.peak_amplitude_deg >= spec.amplitude_lo_deg - 5e-4 &&
                            r.peak_amplitude_deg <= spec.amplitude_hi_deg + 5e-4;
        if (!dur_ok || !amp_ok) {
            if (out_of_range++ == 0) {
                range_detail = r.path;
            }
        }
    }
    for (int k = 0; k < kNumClasses; ++k) {
        ClassStats& c = rep.classes[k];
        const int n = c.per_eye[0] + c.per_eye[1];
        c.mean_events = n > 0 ? sums[k] / n : 0.0;
        if (n == 0) {
            c.min_events = 0;
            c.min_duration_ms = 0.0;
        }
        c.event_hist = Histogram{ev_lo, ev_hi, {}};
        c.duration_hist = Histogram{du_lo, du_hi, {}};
    }
    for (const SampleRecord& r : manifest.samples) {
        fill_histogram(rep.classes[r.class_id].event_hist, static_cast<double>(r.resampled_event_count));
        fill_histogram(rep.classes[r.class_id].duration_hist, static_cast<double>(r.duration_ns) * 1e-6);
    }

    // Balance: every populated eye has the same count in every class.
    {
        InvariantCheck chk{"balance", true, ""};
        std::set<int> sizes;
        for (int e = 0; e < 2; ++e) {
            bool any = false;
            for (const ClassStats& c : rep.classes) {
                any = any || c.per_eye[e] > 0;
            }
            if (!any) {
                continue;
            }
            for (const ClassStats& c : rep.classes) {
                sizes.insert(c.per_eye[e]);
            }
        }
        chk.passed = sizes.size() == 1 && *sizes.begin() > 0;
        chk.detail = chk.passed ? std::to_string(*sizes.begin()) + " per (class, eye) cell" : "unequal cell sizes";
        rep.checks.push_back(chk);
    }
    rep.checks.push_back({"class-table ranges", out_of_range == 0,
                          out_of_range == 0 ? "all amplitudes and durations inside their class ranges"
                                            : std::to_string(out_of_range) + " samples outside, first " + range_detail});
    if (manifest.resampled) {
        InvariantCheck chk{"count overlap", true, "adjacent class event-count ranges intersect"};
        for (int k = 0; k + 1 < kNumClasses; ++k) {
            const ClassStats& a = rep.classes[k];
            const ClassStats& b = rep.classes[k + 1];
            if (a.max_events < b.min_events || b.max_events < a.min_events) {
                chk.passed = false;
                chk.detail = "classes " + std::to_string(k) + " and " + std::to_string(k + 1) + " do not overlap";
                break;
            }
        }
        rep.checks.push_back(chk);
    }
    {
        std::map<std::uint64_t, std::set<Split>> groups;
        bool split_any = false;
        for (const SampleRecord& r : manifest.samples) {
            groups[r.source_seed].insert(r.split);
            split_any = split_any || r.split != Split::Unassigned;
        }
        if (split_any) {
            InvariantCheck chk{"split grouping", true, "no rendered sequence spans two splits"};
            for (const auto& [seed, splits] : groups) {
                if (splits.size() != 1) {
                    chk.passed = false;
                    chk.detail = "source " + seed_hex(seed) + " appears in several splits";
                    break;
                }
            }
            rep.checks.push_back(chk);
        }
    }
    return rep;
}

std::string format_inspect_text(const InspectReport& r) {
    std::ostringstream out;
    out << "samples " << r.samples << "\n\n";
    out << "class  left  right  events(min/mean/max)       duration ms(min/max)\n";
    out << std::fixed;
    for (const ClassStats& c : r.classes) {
        out << std::setw(5) << c.class_id << std::setw(6) << c.per_eye[0] << std::setw(7) << c.per_eye[1] << "  "
            << std::setw(6) << c.min_events << " / " << std::setprecision(1) << std::setw(7) << c.mean_events << " / "
            << std::setw(6) << c.max_events << "   " << std::setprecision(3) << c.min_duration_ms << " / "
            << c.max_duration_ms << '\n';
    }
    if (!r.classes.empty()) {
        const Histogram& h = r.classes.front().event_hist;
        out << "\nevent-count histogram, " << kHistogramBins << " bins over [" << std::setprecision(0) << h.lo << ", "
            << h.hi << "]\n";
        for (const ClassStats& c : r.classes) {
            out << "  class " << c.class_id << ' ';
            for (int v : c.event_hist.counts) {
                out << std::setw(5) << v;
            }
            out << '\n';
        }
        const Histogram& d = r.classes.front().duration_hist;
        out << "duration histogram, " << kHistogramBins << " bins over [" << std::setprecision(3) << d.lo << ", "
            << d.hi << "] ms\n";
        for (const ClassStats& c : r.classes) {
            out << "  class " << c.class_id << ' ';
            for (int v : c.duration_hist.counts) {
                out << std::setw(5) << v;
            }
            out << '\n';
        }
    }
    out << "\nchecks\n";
    for (const InvariantCheck& c : r.checks) {
        out << "  [" << (c.passed ? "ok" : "FAIL") << "] " << c.name << ": " << c.detail << '\n';
    }
    return out.str();
}

void write_inspect_csv(const InspectReport& r, const std::filesystem::path& stats_path,
                       const std::filesystem::path& checks_path) {
    for (const auto& p : {stats_path, checks_path}) {
        if (p.has_parent_path()) {
            std::filesystem::create_directories(p.parent_path());
        }
    }
    std::ofstream s(stats_path, std::ios::trunc);
    if (!s) {
        throw std::runtime_error("cannot open " + stats_path.string());
    }
    s << "class,left,right,min_events,mean_events,max_events,min_duration_ms,max_duration_ms";
    for (int b = 0; b < kHistogramBins; ++b) {
        s << ",events_bin" << b;
    }
    for (int b = 0; b < kHistogramBins; ++b) {
        s << ",duration_bin" << b;
    }
    s << '\n' << std::setprecision(9);
    for (const ClassStats& c : r.classes) {
        s << c.class_id << ',' << c.per_eye[0] << ',' << c.per_eye[1] << ',' << c.min_events << ',' << c.mean_events
          << ',' << c.max_events << ',' << c.min_duration_ms << ',' << c.max_duration_ms;
        for (int v : c.event_hist.counts) {
            s << ',' << v;
        }
        for (int v : c.duration_hist.counts) {
            s << ',' << v;
        }
        s << '\n';
    }
    std::ofstream k(checks_path, std::ios::trunc);
    if (!k) {
        throw std::runtime_error("cannot open " + checks_path.string());
    }
    k << "check,passed,detail\n";
    for (const InvariantCheck& c : r.checks) {
        k << c.name << ',' << (c.passed ? 1 : 0) << ",\"" << c.detail << "\"\n";
    }
}

}  // namespace msx
