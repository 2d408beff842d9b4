#include "msx/evms_io.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <string>

#include "msx/errors.hpp"

namespace msx {

namespace {

constexpr std::uint8_t kMagic[4] = {'E', 'V', 'M', 'S'};

class Writer {
public:
    explicit Writer(std::vector<std::uint8_t>& out) : out_(out) {}

    template <class T>
    void put(T value) {
        for (std::size_t i = 0; i < sizeof(T); ++i) {
            out_.push_back(static_cast<std::uint8_t>(static_cast<std::uint64_t>(value) >> (8 * i)));
        }
    }

private:
    std::vector<std::uint8_t>& out_;
};

class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}

    template <class T>
    T get() {
        if (pos_ + sizeof(T) > in_.size()) {
            throw FormatError("evms: truncated file", in_.size());
        }
        std::uint64_t v = 0;
        for (std::size_t i = 0; i < sizeof(T); ++i) {
            v |= static_cast<std::uint64_t>(in_[pos_ + i]) << (8 * i);
        }
        pos_ += sizeof(T);
        return static_cast<T>(v);
    }

    std::size_t pos() const { return pos_; }

private:
    std::span<const std::uint8_t> in_;
    std::size_t pos_ = 0;
};

}  // namespace

std::string_view to_string(Eye eye) {
    return eye == Eye::Left ? "left" : "right";
}

Eye eye_from_string(std::string_view name) {
    if (name == "left" || name == "L" || name == "l") {
        return Eye::Left;
    }
    if (name == "right" || name == "R" || name == "r") {
        return Eye::Right;
    }
    throw DomainError("unknown eye '" + std::string(name) + "'");
}

std::vector<std::uint8_t> encode_evms(const LabeledSample& sample) {
    const EventStream& s = sample.stream;
    if (s.width <= 0 || s.height <= 0 || s.width > 65535 || s.height > 65535) {
        throw DomainError("evms: geometry does not fit u16");
    }
    if (sample.class_id < 0 || sample.class_id > 255) {
        throw DomainError("evms: class id does not fit u8");
    }
    const double millideg = std::round(sample.peak_amplitude_deg * 1000.0);
    if (!(millideg >= 0.0 && millideg <= std::numeric_limits<std::uint32_t>::max())) {
        throw DomainError("evms: peak amplitude does not fit u32 millidegrees");
    }
    if (sample.duration_ns < 0) {
        throw DomainError("evms: negative duration");
    }

    std::vector<std::uint8_t> out;
    out.reserve(kEvmsHeaderBytes + kEvmsRecordBytes * s.events.size());
    Writer w(out);
    for (std::uint8_t b : kMagic) {
        w.put<std::uint8_t>(b);
    }
    w.put<std::uint16_t>(kEvmsVersion);
    w.put<std::uint16_t>(static_cast<std::uint16_t>(s.width));
    w.put<std::uint16_t>(static_cast<std::uint16_t>(s.height));
    w.put<std::uint8_t>(static_cast<std::uint8_t>(sample.class_id));
    w.put<std::uint8_t>(static_cast<std::uint8_t>(sample.eye));
    w.put<std::uint16_t>(0);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(millideg));
    w.put<std::uint64_t>(static_cast<std::uint64_t>(sample.duration_ns));
    w.put<std::uint64_t>(s.events.size());
    for (const Event& e : s.events) {
        if (e.t_ns < 0 || e.t_ns > std::numeric_limits<std::uint32_t>::max()) {
            throw DomainError("evms: timestamp does not fit u32 nanoseconds");
        }
        if (e.x >= s.width || e.y >= s.height) {
            throw DomainError("evms: event outside geometry");
        }
        w.put<std::uint32_t>(static_cast<std::uint32_t>(e.t_ns));
        w.put<std::uint16_t>(e.x);
        w.put<std::uint16_t>(e.y);
        w.put<std::uint8_t>(e.polarity > 0 ? 1 : 0);
        w.put<std::uint8_t>(0);
    }
    return out;
}

LabeledSample decode_evms(std::span<const std::uint8_t> bytes) {
    Reader r(bytes);
    for (std::uint8_t b : kMagic) {
        const std::size_t at = r.pos();
        if (r.get<std::uint8_t>() != b) {
            throw FormatError("evms: bad magic", at);
        }
    }
    std::size_t at = r.pos();
    if (r.get<std::uint16_t>() != kEvmsVersion) {
        throw FormatError("evms: unsupported version", at);
    }
    at = r.pos();
    const auto width = r.get<std::uint16_t>();
    const auto height = r.get<std::uint16_t>();
    if (width == 0 || height == 0) {
        throw FormatError("evms: zero geometry", at);
    }
    at = r.pos();
    const auto class_id = r.get<std::uint8_t>();
    if (class_id >= 7) {
        throw FormatError("evms: class id out of range", at);
    }
    at = r.pos();
    const auto eye = r.get<std::uint8_t>();
    if (eye > 1) {
        throw FormatError("evms: eye must be 0 or 1", at);
    }
    at = r.pos();
    if (r.get<std::uint16_t>() != 0) {
        throw FormatError("evms: reserved field must be zero", at);
    }
    const auto millideg = r.get<std::uint32_t>();
    const auto duration = r.get<std::uint64_t>();
    at = r.pos();
    const auto count = r.get<std::uint64_t>();

    const std::uint64_t payload = bytes.size() - kEvmsHeaderBytes;
    if (count > payload / kEvmsRecordBytes) {
        throw FormatError("evms: truncated event records", bytes.size());
    }
    if (count * kEvmsRecordBytes != payload) {
        throw FormatError("evms: trailing bytes after event records",
                          kEvmsHeaderBytes + count * kEvmsRecordBytes);
    }
    if (duration > static_cast<std::uint64_t>(std::numeric_limits<std::int64_t>::max())) {
        throw FormatError("evms: duration overflows", at - 8);
    }

    LabeledSample sample;
    sample.class_id = class_id;
    sample.eye = static_cast<Eye>(eye);
    sample.peak_amplitude_deg = millideg / 1000.0;
    sample.duration_ns = static_cast<std::int64_t>(duration);
    sample.raw_event_count = count;
    sample.resampled_event_count = count;
    sample.stream.width = width;
    sample.stream.height = height;
    sample.stream.events.reserve(count);

    std::int64_t prev_t = 0;
    for (std::uint64_t i = 0; i < count; ++i) {
        const std::size_t rec = r.pos();
        Event e;
        e.t_ns = r.get<std::uint32_t>();
        e.x = r.get<std::uint16_t>();
        e.y = r.get<std::uint16_t>();
        const auto pol = r.get<std::uint8_t>();
        const auto pad = r.get<std::uint8_t>();
        if (e.x >= width) {
            throw FormatError("evms: event x out of bounds", rec + 4);
        }
        if (e.y >= height) {
            throw FormatError("evms: event y out of bounds", rec + 6);
        }
        if (pol > 1) {
            throw FormatError("evms: polarity must be 0 or 1", rec + 8);
        }
        if (pad != 0) {
            throw FormatError("evms: pad byte must be zero", rec + 9);
        }
        if (e.t_ns < prev_t) {
            throw FormatError("evms: timestamps must be non-decreasing", rec);
        }
        prev_t = e.t_ns;
        e.polarity = pol == 1 ? 1 : -1;
        sample.stream.events.push_back(e);
    }
    return sample;
}

void write_stream(const LabeledSample& sample, const std::filesystem::path& path) {
    const std::vector<std::uint8_t> bytes = encode_evms(sample);
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    // Write-then-rename so an interrupted build never leaves a half file under the
    // final name.
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw std::runtime_error("cannot open " + tmp.string());
        }
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        if (!out) {
            throw std::runtime_error("write failed: " + tmp.string());
        }
    }
    std::filesystem::rename(tmp, path);
}

LabeledSample read_stream(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw FormatError("evms: cannot open " + path.string(), 0);
    }
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode_evms(bytes);
}

}  // namespace msx
