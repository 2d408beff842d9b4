#include "msx/inference.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "msx/errors.hpp"
#include "msx/evms_io.hpp"

namespace msx {

void InferenceOptions::validate() const {
    if (window_ns <= 0) {
        throw DomainError("infer: window must be positive");
    }
    if (stride_ns < 0) {
        throw DomainError("infer: stride must be >= 0");
    }
    if (!(threshold >= 0.0 && threshold <= 1.0)) {
        throw DomainError("infer: threshold must lie in [0, 1]");
    }
    if (duration_ns && *duration_ns < 0) {
        throw DomainError("infer: negative duration");
    }
    if (batch_size < 1) {
        throw DomainError("infer: batch size must be >= 1");
    }
}

std::size_t InferenceSummary::decided_total() const {
    std::size_t n = 0;
    for (std::size_t d : decided) {
        n += d;
    }
    return n;
}

double InferenceSummary::percent_decided() const {
    return windows == 0 ? 0.0 : 100.0 * static_cast<double>(decided_total()) / static_cast<double>(windows);
}

double InferenceSummary::percent_rejected() const {
    return windows == 0 ? 0.0 : 100.0 * static_cast<double>(rejected) / static_cast<double>(windows);
}

std::vector<WindowDecision> infer_windows(snn::SpikingVgg<float>& model, const EventStream& stream,
                                          const InferenceOptions& options) {
    options.validate();
    const snn::ModelConfig& mc = model.config();
    if (stream.width != mc.width || stream.height != mc.height) {
        throw DomainError("infer: stream geometry differs from the model input; fit it first");
    }
    if (!stream.is_canonical()) {
        throw DomainError("infer: stream is not time-sorted");
    }
    const std::int64_t stride = options.stride_ns == 0 ? options.window_ns : options.stride_ns;
    std::int64_t origin = 0;
    if (options.origin_ns) {
        origin = *options.origin_ns;
    } else if (!options.duration_ns && !stream.events.empty()) {
        origin = stream.events.front().t_ns;
    }
    std::int64_t end = origin;
    if (options.duration_ns) {
        end = origin + *options.duration_ns;
    } else if (!stream.events.empty()) {
        end = stream.events.back().t_ns + 1;
    }

    std::vector<WindowDecision> out;
    for (std::int64_t s = origin; s < end; s += stride) {
        WindowDecision d;
        d.start_ns = s;
        d.end_ns = s + options.window_ns;
        out.push_back(d);
    }

    auto first_at = [&](std::int64_t t) {
        return static_cast<std::size_t>(
            std::lower_bound(stream.events.begin(), stream.events.end(), t,
                             [](const Event& e, std::int64_t v) { return e.t_ns < v; }) -
            stream.events.begin());
    };

    std::vector<std::size_t> pending;
    std::vector<VoxelGrid> grids;
    auto flush = [&] {
        if (pending.empty()) {
            return;
        }
        std::vector<const VoxelGrid*> ptrs;
        for (const VoxelGrid& g : grids) {
            ptrs.push_back(&g);
        }
        const int batch = static_cast<int>(ptrs.size());
        const auto res = model.forward(snn::pack_grids<float>(ptrs), batch, false, false);
        for (int b = 0; b < batch; ++b) {
            const std::vector<double> p = snn::softmax(res.logits, b);
            std::copy(p.begin(), p.end(), out[pending[b]].probabilities.begin());
        }
        pending.clear();
        grids.clear();
    };

    for (std::size_t i = 0; i < out.size(); ++i) {
        WindowDecision& d = out[i];
        const std::size_t lo = first_at(d.start_ns);
        const std::size_t hi = first_at(d.end_ns);
        d.event_count = hi - lo;
        if (d.event_count < options.min_events) {
            d.probabilities.fill(1.0 / kNumClasses);
            continue;
        }
        // Half-open window: the last event sits strictly before end_ns.
        grids.push_back(bin_event_range(stream, lo, hi, mc.steps, options.window_ns, d.start_ns));
        pending.push_back(i);
        if (static_cast<int>(pending.size()) == options.batch_size) {
            flush();
        }
    }
    flush();

    for (WindowDecision& d : out) {
        const auto it = std::max_element(d.probabilities.begin(), d.probabilities.end());
        d.max_probability = *it;
        d.decision = d.max_probability < options.threshold ? kRejected : static_cast<int>(it - d.probabilities.begin());
    }
    return out;
}

InferenceSummary summarize(const std::vector<WindowDecision>& decisions) {
    InferenceSummary s;
    s.windows = decisions.size();
    for (const WindowDecision& d : decisions) {
        if (d.decision == kRejected) {
            ++s.rejected;
        } else {
            ++s.decided[d.decision];
        }
    }
    return s;
}

EventStream fit_to_geometry(const EventStream& stream, int width, int height) {
    if (width < 1 || height < 1) {
        throw DomainError("fit_to_geometry: bad target size");
    }
    const int dx = (stream.width - width) / 2;
    const int dy = (stream.height - height) / 2;
    EventStream out;
    out.width = width;
    out.height = height;
    out.events.reserve(stream.events.size());
    for (const Event& e : stream.events) {
        const int x = e.x - dx;
        const int y = e.y - dy;
        if (x >= 0 && x < width && y >= 0 && y < height) {
            out.events.push_back(Event{e.t_ns, static_cast<std::uint16_t>(x), static_cast<std::uint16_t>(y), e.polarity});
        }
    }
    return out;
}

namespace {

template <class T>
bool parse_field(std::string_view s, T& out) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) {
        s.remove_prefix(1);
    }
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
        s.remove_suffix(1);
    }
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc() && ptr == s.data() + s.size();
}

}  // namespace

EventStream read_events_csv(const std::filesystem::path& path, std::optional<int> width, std::optional<int> height) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw FormatError("csv: cannot open " + path.string(), 0);
    }
    EventStream out;
    std::string line;
    std::uint64_t offset = 0;
    bool first = true;
    int max_x = -1;
    int max_y = -1;
    while (std::getline(in, line)) {
        const std::uint64_t at = offset;
        offset += line.size() + 1;
        if (line.empty() || line == "\r" || line.front() == '#') {
            continue;
        }
        std::vector<std::string_view> f;
        std::string_view rest(line);
        for (std::size_t pos = rest.find(','); pos != std::string_view::npos; pos = rest.find(',')) {
            f.push_back(rest.substr(0, pos));
            rest.remove_prefix(pos + 1);
        }
        f.push_back(rest);
        double t_us = 0.0;
        long x = 0;
        long y = 0;
        int p = 0;
        const bool ok = f.size() == 4 && parse_field(f[0], t_us) && parse_field(f[1], x) && parse_field(f[2], y) &&
                        parse_field(f[3], p);
        if (!ok) {
            if (first) {
                first = false;  // header
                continue;
            }
            throw FormatError("csv: expected t_us,x,y,p", at);
        }
        first = false;
        if (!(t_us >= 0.0) || !std::isfinite(t_us)) {
            throw FormatError("csv: negative or non-finite timestamp", at);
        }
        if (x < 0 || y < 0 || x > 65535 || y > 65535) {
            throw FormatError("csv: coordinate out of range", at);
        }
        if ((width && x >= *width) || (height && y >= *height)) {
            throw FormatError("csv: event outside the declared geometry", at);
        }
        if (p != 0 && p != 1 && p != -1) {
            throw FormatError("csv: polarity must be 0, 1 or -1", at);
        }
        out.events.push_back(Event{std::llround(t_us * 1000.0), static_cast<std::uint16_t>(x),
                                   static_cast<std::uint16_t>(y), static_cast<std::int8_t>(p == 1 ? 1 : -1)});
        max_x = std::max<int>(max_x, static_cast<int>(x));
        max_y = std::max<int>(max_y, static_cast<int>(y));
    }
    out.width = width.value_or(max_x + 1);
    out.height = height.value_or(max_y + 1);
    out.canonicalize();
    return out;
}

Recording load_recording(const std::filesystem::path& path, std::optional<int> width, std::optional<int> height) {
    Recording r;
    if (path.extension() == ".evms") {
        LabeledSample s = read_stream(path);
        r.stream = std::move(s.stream);
        r.duration_ns = s.duration_ns;
        return r;
    }
    if (path.extension() == ".csv" || path.extension() == ".txt") {
        r.stream = read_events_csv(path, width, height);
        return r;
    }
    throw FormatError("unsupported recording format '" + path.extension().string() + "'", 0);
}

std::string format_inference_text(const InferenceSummary& s, const InferenceOptions& o) {
    std::ostringstream out;
    out << std::fixed << std::setprecision(2);
    out << "windows " << s.windows << " (window " << o.window_ns << " ns, stride "
        << (o.stride_ns == 0 ? o.window_ns : o.stride_ns) << " ns, threshold " << o.threshold << ")\n";
    out << "decided  " << s.decided_total() << "  (" << s.percent_decided() << "%)\n";
    out << "rejected " << s.rejected << "  (" << s.percent_rejected() << "%)\n";
    for (int k = 0; k < kNumClasses; ++k) {
        const double pct = s.windows == 0 ? 0.0 : 100.0 * static_cast<double>(s.decided[k]) / static_cast<double>(s.windows);
        out << "  class " << k << "  " << s.decided[k] << "  (" << pct << "%)\n";
    }
    return out.str();
}

void write_decisions_csv(const std::vector<WindowDecision>& decisions, const std::filesystem::path& path) {
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw std::runtime_error("cannot open " + path.string());
    }
    out << "start_ns,end_ns,events,decision,max_probability";
    for (int k = 0; k < kNumClasses; ++k) {
        out << ",p" << k;
    }
    out << '\n' << std::setprecision(9);
    for (const WindowDecision& d : decisions) {
        out << d.start_ns << ',' << d.end_ns << ',' << d.event_count << ',' << d.decision << ',' << d.max_probability;
        for (double p : d.probabilities) {
            out << ',' << p;
        }
        out << '\n';
    }
}

void write_summary_csv(const InferenceSummary& s, const std::filesystem::path& path) {
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw std::runtime_error("cannot open " + path.string());
    }
    out << "outcome,windows,percent\n" << std::setprecision(9);
    const auto pct = [&](std::size_t n) {
        return s.windows == 0 ? 0.0 : 100.0 * static_cast<double>(n) / static_cast<double>(s.windows);
    };
    for (int k = 0; k < kNumClasses; ++k) {
        out << "class_" << k << ',' << s.decided[k] << ',' << pct(s.decided[k]) << '\n';
    }
    out << "decided," << s.decided_total() << ',' << pct(s.decided_total()) << '\n';
    out << "rejected," << s.rejected << ',' << pct(s.rejected) << '\n';
}

}  // namespace msx
