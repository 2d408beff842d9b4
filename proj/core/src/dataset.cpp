#include "msx/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "msx/digest.hpp"
#include "msx/errors.hpp"
#include "msx/evms_io.hpp"
#include "msx/parallel.hpp"

namespace msx {

namespace fs = std::filesystem;

namespace {

double quantize_millideg(double deg) {
    return std::round(deg * 1000.0) / 1000.0;
}

fs::path sample_rel_path(Eye eye, int class_id, std::uint64_t seed) {
    return fs::path(std::string(to_string(eye))) / std::to_string(class_id) / (seed_hex(seed) + ".evms");
}

SampleRecord make_record(const LabeledSample& s, const fs::path& rel, std::uint64_t source_seed,
                         std::string digest) {
    SampleRecord r;
    r.path = rel.generic_string();
    r.class_id = s.class_id;
    r.eye = s.eye;
    r.peak_amplitude_deg = quantize_millideg(s.peak_amplitude_deg);
    r.duration_ns = s.duration_ns;
    r.raw_event_count = s.raw_event_count;
    r.resampled_event_count = s.resampled_event_count;
    r.seed = s.seed;
    r.source_seed = source_seed;
    r.digest = std::move(digest);
    return r;
}

std::string write_sample_file(const LabeledSample& sample, const fs::path& path) {
    const std::vector<std::uint8_t> bytes = encode_evms(sample);
    std::string digest = sha256_hex(bytes);
    fs::create_directories(path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        if (!out) {
            throw std::runtime_error("write failed: " + tmp.string());
        }
    }
    fs::rename(tmp, path);
    return digest;
}

}  // namespace

std::string seed_hex(std::uint64_t seed) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(seed));
    return buf;
}

Roi center_roi(int sensor_width, int sensor_height) {
    if (sensor_width <= 0 || sensor_height <= 0) {
        throw DomainError("center_roi: bad sensor size");
    }
    Roi roi;
    roi.width = static_cast<int>(std::lround(0.55 * sensor_width));
    roi.height = static_cast<int>(std::lround(0.5 * sensor_height));
    roi.x0 = (sensor_width - roi.width) / 2;
    roi.y0 = (sensor_height - roi.height) / 2;
    return roi;
}

EventStream crop_to_roi(const EventStream& stream, const Roi& roi) {
    if (roi.x0 < 0 || roi.y0 < 0 || roi.width <= 0 || roi.height <= 0 ||
        roi.x0 + roi.width > stream.width || roi.y0 + roi.height > stream.height) {
        throw DomainError("crop_to_roi: ROI outside the sensor");
    }
    EventStream out;
    out.width = roi.width;
    out.height = roi.height;
    for (const Event& e : stream.events) {
        const int x = e.x - roi.x0;
        const int y = e.y - roi.y0;
        if (x >= 0 && y >= 0 && x < roi.width && y < roi.height) {
            out.events.push_back(Event{e.t_ns, static_cast<std::uint16_t>(x), static_cast<std::uint16_t>(y), e.polarity});
        }
    }
    // A shift preserves the canonical order.
    return out;
}

LabeledSample build_sample(int class_id, Eye eye, const SceneConfig& scene, const SimulatorConfig& sim,
                           std::uint64_t seed, std::optional<TrajectoryHint> hint) {
    if (class_id < 0 || class_id >= kNumClasses) {
        throw DomainError("build_sample: class_id out of range");
    }
    if (eye == Eye::Right) {
        LabeledSample left = build_sample(class_id, Eye::Left, scene, sim, seed, hint);
        return mirror_sample(left);
    }
    scene.scene.validate();
    sim.validate();
    const Roi roi = center_roi(scene.scene.width, scene.scene.height);
    Rng rng(seed);

    for (int attempt = 0; attempt <= kSampleRetries; ++attempt) {
        Trajectory traj;
        if (attempt == 0 && hint) {
            const ClassSpec& spec = scene.classes[class_id];
            std::uniform_real_distribution<double> duration(spec.duration_lo_ms, spec.duration_hi_ms);
            traj.class_id = class_id;
            traj.peak_amplitude_deg = hint->peak_amplitude_deg;
            traj.direction = hint->direction;
            traj.duration_ms = duration(rng);
            traj.frame_count = spec.frame_count;
        } else {
            traj = make_trajectory(class_id, rng, scene.classes);
        }
        const FrameSequence frames = render_sequence(scene.scene, traj);
        EventStream cropped = crop_to_roi(simulate_events(frames, sim, rng), roi);
        if (cropped.events.empty()) {
            continue;
        }
        LabeledSample s;
        s.stream = std::move(cropped);
        s.class_id = class_id;
        s.eye = Eye::Left;
        s.peak_amplitude_deg = quantize_millideg(traj.peak_amplitude_deg);
        s.duration_ns = traj.duration_ns();
        s.raw_event_count = s.stream.events.size();
        s.resampled_event_count = s.raw_event_count;
        s.seed = seed;
        return s;
    }
    throw GenerationError("build_sample: no events after " + std::to_string(kSampleRetries) +
                              " retries (class " + std::to_string(class_id) + ", seed " + seed_hex(seed) + ")",
                          seed);
}

LabeledSample mirror_sample(const LabeledSample& sample) {
    if (sample.eye != Eye::Left) {
        throw DomainError("mirror_sample: only left-eye samples can be mirrored");
    }
    LabeledSample out = sample;
    out.eye = Eye::Right;
    const int w = sample.stream.width;
    for (Event& e : out.stream.events) {
        e.x = static_cast<std::uint16_t>(w - 1 - e.x);
    }
    out.stream.canonicalize();
    return out;
}

void CountCalibration::add(int class_id, std::uint64_t count) {
    counts.at(static_cast<std::size_t>(class_id)).push_back(count);
}

void CountCalibration::finalize() {
    for (auto& v : counts) {
        std::sort(v.begin(), v.end());
    }
}

double quantile_sorted(const std::vector<std::uint64_t>& sorted, double q) {
    if (sorted.empty()) {
        throw DomainError("quantile of an empty sample");
    }
    const double h = (static_cast<double>(sorted.size()) - 1.0) * q;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = h - static_cast<double>(lo);
    return static_cast<double>(sorted[lo]) + frac * (static_cast<double>(sorted[hi]) - static_cast<double>(sorted[lo]));
}

CountInterval count_interval(int class_id, const CountCalibration& calibration) {
    if (class_id < 0 || class_id >= kNumClasses) {
        throw DomainError("count_interval: class_id out of range");
    }
    auto pooled = [&](int a, int b) {
        std::vector<std::uint64_t> v;
        for (int c = std::max(a, 0); c <= std::min(b, kNumClasses - 1); ++c) {
            v.insert(v.end(), calibration.counts[c].begin(), calibration.counts[c].end());
        }
        std::sort(v.begin(), v.end());
        return v;
    };
    const std::vector<std::uint64_t> below = pooled(class_id - 1, class_id);
    const std::vector<std::uint64_t> above = pooled(class_id, class_id + 1);
    if (below.empty() || above.empty()) {
        throw DomainError("count_interval: no calibration counts for class " + std::to_string(class_id));
    }
    CountInterval iv;
    iv.lo = std::max<std::uint64_t>(1, static_cast<std::uint64_t>(std::floor(quantile_sorted(below, 0.25))));
    iv.hi = std::max<std::uint64_t>(1, static_cast<std::uint64_t>(std::ceil(quantile_sorted(above, 0.75))));
    if (iv.hi < iv.lo) {
        std::swap(iv.lo, iv.hi);
    }
    return iv;
}

std::uint64_t target_count_for(int class_id, const CountCalibration& calibration, Rng& rng) {
    const CountInterval iv = count_interval(class_id, calibration);
    std::uniform_int_distribution<std::uint64_t> pick(iv.lo, iv.hi);
    return pick(rng);
}

LabeledSample resample_counts(const LabeledSample& sample, std::uint64_t target_count, Rng& rng) {
    if (target_count < 1) {
        throw DomainError("resample_counts: target_count must be >= 1");
    }
    LabeledSample out = sample;
    const auto& src = sample.stream.events;
    if (target_count < src.size()) {
        out.stream.events.clear();
        out.stream.events.reserve(target_count);
        // Selection sampling keeps the input order, so the result stays canonical.
        std::sample(src.begin(), src.end(), std::back_inserter(out.stream.events), target_count, rng);
    }
    out.resampled_event_count = out.stream.events.size();
    return out;
}

std::string_view to_string(Split split) {
    switch (split) {
        case Split::Train: return "train";
        case Split::Val: return "val";
        case Split::Test: return "test";
        case Split::Unassigned: break;
    }
    return "none";
}

Split split_from_string(std::string_view name) {
    if (name == "train") return Split::Train;
    if (name == "val") return Split::Val;
    if (name == "test") return Split::Test;
    if (name == "none") return Split::Unassigned;
    throw DomainError("unknown split '" + std::string(name) + "'");
}

std::string DatasetManifest::content_digest() const {
    std::vector<const SampleRecord*> sorted;
    sorted.reserve(samples.size());
    for (const auto& s : samples) {
        sorted.push_back(&s);
    }
    std::sort(sorted.begin(), sorted.end(), [](auto* a, auto* b) { return a->path < b->path; });
    std::ostringstream text;
    text << "schema=" << schema_version << ";sensor=" << sensor_width << 'x' << sensor_height << ";roi=" << roi.x0
         << ',' << roi.y0 << ',' << roi.width << ',' << roi.height << ";seed=" << global_seed << '\n';
    for (const SampleRecord* r : sorted) {
        text << r->path << '|' << r->digest << '|' << r->class_id << '|' << to_string(r->eye) << '|'
             << static_cast<long long>(std::llround(r->peak_amplitude_deg * 1000.0)) << '|' << r->duration_ns << '|'
             << r->raw_event_count << '|' << r->resampled_event_count << '|' << seed_hex(r->seed) << '|'
             << seed_hex(r->source_seed) << '\n';
    }
    return sha256_hex(text.str());
}

std::vector<const SampleRecord*> DatasetManifest::select(Split split, std::optional<Eye> eye) const {
    std::vector<const SampleRecord*> out;
    for (const auto& s : samples) {
        if (s.split == split && (!eye || s.eye == *eye)) {
            out.push_back(&s);
        }
    }
    return out;
}

nlohmann::json to_json(const DatasetManifest& m) {
    nlohmann::json j;
    j["schema_version"] = m.schema_version;
    j["sensor"] = {{"width", m.sensor_width}, {"height", m.sensor_height}};
    j["roi"] = {{"x0", m.roi.x0}, {"y0", m.roi.y0}, {"width", m.roi.width}, {"height", m.roi.height}};
    j["global_seed"] = m.global_seed;
    j["resampled"] = m.resampled;
    j["config"] = m.config;
    j["dataset_digest"] = m.content_digest();
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& r : m.samples) {
        rows.push_back({
            {"path", r.path},
            {"class_id", r.class_id},
            {"eye", to_string(r.eye)},
            {"peak_amplitude_deg", r.peak_amplitude_deg},
            {"duration_ns", r.duration_ns},
            {"raw_event_count", r.raw_event_count},
            {"resampled_event_count", r.resampled_event_count},
            {"seed", seed_hex(r.seed)},
            {"source_seed", seed_hex(r.source_seed)},
            {"sha256", r.digest},
            {"split", to_string(r.split)},
        });
    }
    j["samples"] = std::move(rows);
    return j;
}

DatasetManifest manifest_from_json(const nlohmann::json& j) {
    DatasetManifest m;
    m.schema_version = j.at("schema_version").get<int>();
    if (m.schema_version != kManifestSchemaVersion) {
        throw DomainError("manifest: unsupported schema version " + std::to_string(m.schema_version));
    }
    m.sensor_width = j.at("sensor").at("width").get<int>();
    m.sensor_height = j.at("sensor").at("height").get<int>();
    const auto& roi = j.at("roi");
    m.roi = Roi{roi.at("x0").get<int>(), roi.at("y0").get<int>(), roi.at("width").get<int>(), roi.at("height").get<int>()};
    m.global_seed = j.at("global_seed").get<std::uint64_t>();
    m.resampled = j.value("resampled", true);
    m.config = j.value("config", nlohmann::json::object());
    for (const auto& row : j.at("samples")) {
        SampleRecord r;
        r.path = row.at("path").get<std::string>();
        r.class_id = row.at("class_id").get<int>();
        r.eye = eye_from_string(row.at("eye").get<std::string>());
        r.peak_amplitude_deg = row.at("peak_amplitude_deg").get<double>();
        r.duration_ns = row.at("duration_ns").get<std::int64_t>();
        r.raw_event_count = row.at("raw_event_count").get<std::uint64_t>();
        r.resampled_event_count = row.at("resampled_event_count").get<std::uint64_t>();
        r.seed = std::stoull(row.at("seed").get<std::string>(), nullptr, 16);
        r.source_seed = std::stoull(row.at("source_seed").get<std::string>(), nullptr, 16);
        r.digest = row.at("sha256").get<std::string>();
        r.split = split_from_string(row.value("split", std::string("none")));
        if (r.class_id < 0 || r.class_id >= kNumClasses) {
            throw DomainError("manifest: class id out of range in " + r.path);
        }
        m.samples.push_back(std::move(r));
    }
    if (j.contains("dataset_digest") && j.at("dataset_digest").get<std::string>() != m.content_digest()) {
        throw IntegrityError("manifest: dataset_digest does not match the sample records");
    }
    return m;
}

void write_manifest(const DatasetManifest& manifest, const fs::path& path) {
    if (path.has_parent_path()) {
        fs::create_directories(path.parent_path());
    }
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::trunc);
        out << to_json(manifest).dump(1) << '\n';
        if (!out) {
            throw std::runtime_error("write failed: " + tmp.string());
        }
    }
    fs::rename(tmp, path);
}

DatasetManifest read_manifest(const fs::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw IntegrityError("cannot open manifest " + path.string());
    }
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw FormatError(std::string("manifest: ") + e.what(), e.byte);
    }
    return manifest_from_json(j);
}

DatasetConfig DatasetConfig::desk() {
    return DatasetConfig{};
}

DatasetConfig DatasetConfig::full() {
    DatasetConfig c;
    c.scene.scene = EyeScene::full();
    c.base_instances = 500;
    return c;
}

void DatasetConfig::validate() const {
    scene.scene.validate();
    validate_class_table(scene.classes);
    sim.validate();
    if (base_instances < 1 || durations_per_instance < 1 || resamples_per_sequence < 1) {
        throw DomainError("dataset: B, D and R must be >= 1");
    }
}

DatasetConfig dataset_config_from_json(const nlohmann::json& j, DatasetConfig base) {
    if (j.contains("preset")) {
        const std::string preset = j.at("preset").get<std::string>();
        if (preset == "desk") {
            base = DatasetConfig::desk();
        } else if (preset == "full") {
            base = DatasetConfig::full();
        } else {
            throw DomainError("unknown dataset preset '" + preset + "'");
        }
    }
    base.scene = scene_config_from_json(j, base.scene);
    if (j.contains("simulator")) {
        const auto& s = j.at("simulator");
        SimulatorConfig& c = base.sim;
        c.theta_on = s.value("theta_on", c.theta_on);
        c.theta_off = s.value("theta_off", c.theta_off);
        c.threshold_mismatch_sigma = s.value("threshold_mismatch_sigma", c.threshold_mismatch_sigma);
        c.refractory_period_ns = s.value("refractory_period_ns", c.refractory_period_ns);
        c.noise_rate_hz = s.value("noise_rate_hz", c.noise_rate_hz);
        c.log_eps = s.value("log_eps", c.log_eps);
    }
    if (j.contains("dataset")) {
        const auto& d = j.at("dataset");
        base.base_instances = d.value("base_instances", base.base_instances);
        base.durations_per_instance = d.value("durations_per_instance", base.durations_per_instance);
        base.resamples_per_sequence = d.value("resamples_per_sequence", base.resamples_per_sequence);
        base.resample = d.value("resample", base.resample);
        base.right_eye = d.value("right_eye", base.right_eye);
        base.seed = d.value("seed", base.seed);
    }
    base.validate();
    return base;
}

nlohmann::json to_json(const DatasetConfig& c) {
    nlohmann::json j = to_json(c.scene);
    j["simulator"] = {
        {"theta_on", c.sim.theta_on},
        {"theta_off", c.sim.theta_off},
        {"threshold_mismatch_sigma", c.sim.threshold_mismatch_sigma},
        {"refractory_period_ns", c.sim.refractory_period_ns},
        {"noise_rate_hz", c.sim.noise_rate_hz},
        {"log_eps", c.sim.log_eps},
    };
    j["dataset"] = {
        {"base_instances", c.base_instances},
        {"durations_per_instance", c.durations_per_instance},
        {"resamples_per_sequence", c.resamples_per_sequence},
        {"resample", c.resample},
        {"right_eye", c.right_eye},
        {"seed", c.seed},
    };
    return j;
}

DatasetManifest build_dataset(const DatasetConfig& config, const fs::path& out_dir) {
    config.validate();
    const fs::path manifest_path = out_dir / kManifestFileName;
    if (fs::exists(manifest_path)) {
        fs::remove(manifest_path);
    }

    // Rendered sequences depend on scene, simulator and seed only; key the cache on
    // exactly those so a changed config never reuses stale files.
    nlohmann::json cache_key = to_json(config.scene);
    cache_key["simulator"] = to_json(config)["simulator"];
    cache_key["seed"] = config.seed;
    const fs::path raw_dir = out_dir / "raw" / sha256_hex(cache_key.dump()).substr(0, 12);

    struct SourceJob {
        int class_id;
        int base;
        int duration_index;
        std::uint64_t source_seed;
    };
    std::vector<SourceJob> jobs;
    for (int c = 0; c < kNumClasses; ++c) {
        for (int b = 0; b < config.base_instances; ++b) {
            const std::uint64_t base_seed = derive_seed(config.seed, static_cast<std::uint64_t>(c), static_cast<std::uint64_t>(b));
            for (int d = 0; d < config.durations_per_instance; ++d) {
                jobs.push_back({c, b, d, derive_seed(base_seed, static_cast<std::uint64_t>(d) + 1)});
            }
        }
    }

    std::vector<LabeledSample> sources(jobs.size());
    parallel_for(jobs.size(), config.workers, [&](std::size_t i) {
        const SourceJob& job = jobs[i];
        const fs::path cached = raw_dir / std::to_string(job.class_id) / (seed_hex(job.source_seed) + ".evms");
        if (fs::exists(cached)) {
            try {
                LabeledSample s = read_stream(cached);
                s.seed = job.source_seed;
                sources[i] = std::move(s);
                return;
            } catch (const FormatError&) {
                fs::remove(cached);
            }
        }
        Rng base_rng(derive_seed(config.seed, static_cast<std::uint64_t>(job.class_id), static_cast<std::uint64_t>(job.base)));
        const Trajectory base = make_trajectory(job.class_id, base_rng, config.scene.classes);
        const TrajectoryHint hint{base.peak_amplitude_deg, base.direction};
        LabeledSample s = build_sample(job.class_id, Eye::Left, config.scene, config.sim, job.source_seed, hint);
        write_stream(s, cached);
        sources[i] = std::move(s);
    });

    CountCalibration calibration;
    for (const auto& s : sources) {
        calibration.add(s.class_id, s.raw_event_count);
    }
    calibration.finalize();

    const int repeats = config.resample ? config.resamples_per_sequence : 1;
    const int eyes = config.right_eye ? 2 : 1;
    std::vector<SampleRecord> records(jobs.size() * repeats * eyes);
    parallel_for(jobs.size() * repeats, config.workers, [&](std::size_t k) {
        const std::size_t i = k / repeats;
        const int r = static_cast<int>(k % repeats);
        const LabeledSample& src = sources[i];
        LabeledSample left;
        if (config.resample) {
            const std::uint64_t seed = derive_seed(src.seed, 0x5E5A, static_cast<std::uint64_t>(r));
            Rng rng(seed);
            const std::uint64_t target = target_count_for(src.class_id, calibration, rng);
            left = resample_counts(src, target, rng);
            left.seed = seed;
        } else {
            left = src;
        }
        const fs::path rel_left = sample_rel_path(Eye::Left, left.class_id, left.seed);
        records[k * eyes] = make_record(left, rel_left, src.seed, write_sample_file(left, out_dir / rel_left));
        if (config.right_eye) {
            const LabeledSample right = mirror_sample(left);
            const fs::path rel_right = sample_rel_path(Eye::Right, right.class_id, right.seed);
            records[k * eyes + 1] = make_record(right, rel_right, src.seed, write_sample_file(right, out_dir / rel_right));
        }
    });

    DatasetManifest manifest;
    manifest.sensor_width = config.scene.scene.width;
    manifest.sensor_height = config.scene.scene.height;
    manifest.roi = center_roi(manifest.sensor_width, manifest.sensor_height);
    manifest.global_seed = config.seed;
    manifest.resampled = config.resample;
    manifest.config = to_json(config);
    manifest.samples = std::move(records);
    std::sort(manifest.samples.begin(), manifest.samples.end(),
              [](const SampleRecord& a, const SampleRecord& b) { return a.path < b.path; });
    write_manifest(manifest, manifest_path);
    return manifest;
}

DatasetManifest split_dataset(const DatasetManifest& manifest, double val_fraction, int test_count,
                              std::uint64_t seed) {
    if (!(val_fraction >= 0.0 && val_fraction < 1.0)) {
        throw DomainError("split: val_fraction must lie in [0, 1)");
    }
    if (test_count < 0) {
        throw DomainError("split: test_count must be >= 0");
    }

    // cell (eye, class) -> group (source sequence) -> record indices
    std::map<std::pair<int, int>, std::map<std::uint64_t, std::vector<std::size_t>>> cells;
    for (std::size_t i = 0; i < manifest.samples.size(); ++i) {
        const auto& r = manifest.samples[i];
        cells[{static_cast<int>(r.eye), r.class_id}][r.source_seed].push_back(i);
    }
    int eyes = 0;
    for (int e = 0; e < 2; ++e) {
        if (cells.count({e, 0}) != 0) {
            ++eyes;
        }
    }
    if (eyes == 0 || cells.size() != static_cast<std::size_t>(eyes * kNumClasses)) {
        throw DomainError("split: every (class, eye) cell must be populated");
    }
    if (test_count % (kNumClasses * eyes) != 0) {
        throw DomainError("split: test_count " + std::to_string(test_count) + " is not divisible by " +
                          std::to_string(kNumClasses * eyes) + " (classes x eyes)");
    }

    std::size_t cell_size = 0;
    std::size_t group_size = 0;
    for (const auto& [key, groups] : cells) {
        std::size_t n = 0;
        for (const auto& [g, idx] : groups) {
            n += idx.size();
            if (group_size == 0) {
                group_size = idx.size();
            } else if (idx.size() != group_size) {
                throw DomainError("split: source groups have unequal sizes");
            }
        }
        if (cell_size == 0) {
            cell_size = n;
        } else if (n != cell_size) {
            throw DomainError("split: (class, eye) cells have unequal sizes");
        }
    }

    const auto test_per_cell = static_cast<std::size_t>(test_count / (kNumClasses * eyes));
    const auto val_per_cell = static_cast<std::size_t>(std::llround(val_fraction * static_cast<double>(cell_size)));
    if (test_per_cell + val_per_cell > cell_size) {
        throw DomainError("split: val + test exceed the samples per cell");
    }
    if (test_per_cell % group_size != 0 || val_per_cell % group_size != 0) {
        throw DomainError("split: per-cell val (" + std::to_string(val_per_cell) + ") and test (" +
                          std::to_string(test_per_cell) + ") sizes must be multiples of the resample group size " +
                          std::to_string(group_size));
    }

    DatasetManifest out = manifest;
    for (auto& [key, groups] : cells) {
        std::vector<std::uint64_t> order;
        for (const auto& [g, idx] : groups) {
            order.push_back(g);
        }
        // Same permutation for both eyes (keyed by class only), so mirrored pairs share a split.
        Rng rng(derive_seed(seed, static_cast<std::uint64_t>(key.second)));
        std::shuffle(order.begin(), order.end(), rng);
        std::size_t assigned = 0;
        for (std::uint64_t g : order) {
            Split split = Split::Train;
            if (assigned < test_per_cell) {
                split = Split::Test;
            } else if (assigned < test_per_cell + val_per_cell) {
                split = Split::Val;
            }
            for (std::size_t i : groups[g]) {
                out.samples[i].split = split;
            }
            assigned += groups[g].size();
        }
    }
    return out;
}

}  // namespace msx
