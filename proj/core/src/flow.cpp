#include "msx/flow.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "msx/errors.hpp"

namespace msx {

namespace {

void put_u32(std::ofstream& out, std::uint32_t v) {
    const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                                static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(const std::vector<unsigned char>& buf, std::size_t at) {
    if (at + 4 > buf.size()) {
        throw FormatError("flow cache: truncated", buf.size());
    }
    return static_cast<std::uint32_t>(buf[at]) | (static_cast<std::uint32_t>(buf[at + 1]) << 8) |
           (static_cast<std::uint32_t>(buf[at + 2]) << 16) | (static_cast<std::uint32_t>(buf[at + 3]) << 24);
}

}  // namespace

Plane normalize_max_abs(const Plane& frame) {
    float peak = 0.0F;
    for (float v : frame.data) {
        peak = std::max(peak, std::abs(v));
    }
    Plane out = frame;
    if (peak > 0.0F) {
        for (float& v : out.data) {
            v /= peak;
        }
    }
    return out;
}

std::vector<FlowField> flow_targets(const VoxelGrid& grid, const FarnebackParams& params) {
    if (grid.bins < 2) {
        throw DomainError("flow_targets: need at least two bins");
    }
    const std::vector<Plane> frames = polarity_sum(grid);
    std::vector<Plane> normalized;
    normalized.reserve(frames.size());
    for (const Plane& f : frames) {
        normalized.push_back(normalize_max_abs(f));
    }
    std::vector<FlowField> out;
    out.reserve(frames.size() - 1);
    for (std::size_t t = 0; t + 1 < normalized.size(); ++t) {
        const bool empty = std::all_of(normalized[t].data.begin(), normalized[t].data.end(), [](float v) { return v == 0.0F; }) &&
                           std::all_of(normalized[t + 1].data.begin(), normalized[t + 1].data.end(), [](float v) { return v == 0.0F; });
        if (empty) {
            out.emplace_back(grid.width, grid.height);
        } else {
            out.push_back(farneback(normalized[t], normalized[t + 1], params));
        }
    }
    return out;
}

double flow_loss(const std::vector<FlowField>& predicted, const std::vector<FlowField>& target) {
    if (predicted.size() != target.size() || predicted.empty()) {
        throw DomainError("flow_loss: field counts differ or are zero");
    }
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t f = 0; f < predicted.size(); ++f) {
        const FlowField& p = predicted[f];
        const FlowField& t = target[f];
        if (p.width != t.width || p.height != t.height || p.u.size() != t.u.size() || p.v.size() != t.v.size()) {
            throw DomainError("flow_loss: field shapes differ");
        }
        for (std::size_t i = 0; i < p.size(); ++i) {
            const double du = static_cast<double>(p.u[i]) - t.u[i];
            const double dv = static_cast<double>(p.v[i]) - t.v[i];
            sum += du * du + dv * dv;
        }
        n += p.size();
    }
    return sum / static_cast<double>(n);
}

double total_loss(double class_loss, double flow_loss_value, double lambda) {
    if (!(lambda >= 0.0)) {
        throw DomainError("total_loss: lambda must be >= 0");
    }
    return class_loss + lambda * flow_loss_value;
}

void write_flow_cache(const std::vector<FlowField>& fields, const std::filesystem::path& path) {
    static_assert(std::endian::native == std::endian::little, "flow cache writer assumes a little-endian host");
    if (fields.empty()) {
        throw DomainError("flow cache: no fields");
    }
    const int w = fields.front().width;
    const int h = fields.front().height;
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw std::runtime_error("cannot open " + tmp.string());
    }
    out.write("EVFL", 4);
    put_u32(out, static_cast<std::uint32_t>(fields.size()));
    put_u32(out, static_cast<std::uint32_t>(h));
    put_u32(out, static_cast<std::uint32_t>(w));
    std::vector<float> row(static_cast<std::size_t>(w) * 2);
    for (const FlowField& f : fields) {
        if (f.width != w || f.height != h) {
            throw DomainError("flow cache: fields differ in size");
        }
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                const std::size_t i = static_cast<std::size_t>(y) * w + x;
                row[2 * x] = f.u[i];
                row[2 * x + 1] = f.v[i];
            }
            out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size() * sizeof(float)));
        }
    }
    out.close();
    if (!out) {
        throw std::runtime_error("write failed: " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

std::vector<FlowField> read_flow_cache(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw FormatError("flow cache: cannot open " + path.string(), 0);
    }
    std::vector<unsigned char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (buf.size() < 16 || std::memcmp(buf.data(), "EVFL", 4) != 0) {
        throw FormatError("flow cache: bad magic", 0);
    }
    const std::uint32_t n = get_u32(buf, 4);
    const std::uint32_t h = get_u32(buf, 8);
    const std::uint32_t w = get_u32(buf, 12);
    const std::uint64_t expected = 16 + static_cast<std::uint64_t>(n) * h * w * 2 * sizeof(float);
    if (buf.size() != expected) {
        throw FormatError("flow cache: size disagrees with header", std::min<std::uint64_t>(buf.size(), expected));
    }
    std::vector<FlowField> out;
    out.reserve(n);
    const unsigned char* p = buf.data() + 16;
    for (std::uint32_t f = 0; f < n; ++f) {
        FlowField field(static_cast<int>(w), static_cast<int>(h));
        for (std::size_t i = 0; i < field.size(); ++i) {
            std::memcpy(&field.u[i], p, sizeof(float));
            std::memcpy(&field.v[i], p + 4, sizeof(float));
            p += 8;
        }
        out.push_back(std::move(field));
    }
    return out;
}

}  // namespace msx
