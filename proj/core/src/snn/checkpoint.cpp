#include "msx/snn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>

#include "msx/errors.hpp"

namespace msx::snn {

namespace {

constexpr char kMagic[4] = {'E', 'V', 'C', 'K'};

void put_bytes(std::vector<std::uint8_t>& out, std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) {
        out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
}

class Cursor {
public:
    explicit Cursor(const std::vector<std::uint8_t>& in) : in_(in) {}

    std::uint64_t get(int n) {
        need(n);
        std::uint64_t v = 0;
        for (int i = 0; i < n; ++i) {
            v |= static_cast<std::uint64_t>(in_[pos_ + i]) << (8 * i);
        }
        pos_ += n;
        return v;
    }

    std::string str(std::size_t n) {
        need(n);
        std::string s(reinterpret_cast<const char*>(in_.data() + pos_), n);
        pos_ += n;
        return s;
    }

    void need(std::size_t n) const {
        if (pos_ + n > in_.size()) {
            throw FormatError("checkpoint: truncated", in_.size());
        }
    }

    std::size_t pos() const { return pos_; }
    bool done() const { return pos_ == in_.size(); }

private:
    const std::vector<std::uint8_t>& in_;
    std::size_t pos_ = 0;
};

}  // namespace

void save_checkpoint(const std::filesystem::path& path, SpikingVgg<float>& model, const nlohmann::json& meta) {
    nlohmann::json header = meta;
    header["model"] = to_json(model.config());
    const std::string text = header.dump();

    std::vector<std::uint8_t> out(kMagic, kMagic + 4);
    put_bytes(out, kCheckpointVersion, 4);
    put_bytes(out, text.size(), 4);
    out.insert(out.end(), text.begin(), text.end());
    const auto params = model.parameters();
    put_bytes(out, params.size(), 4);
    for (const Param<float>* p : params) {
        put_bytes(out, p->name.size(), 2);
        out.insert(out.end(), p->name.begin(), p->name.end());
        put_bytes(out, p->shape.size(), 1);
        for (int d : p->shape) {
            put_bytes(out, static_cast<std::uint32_t>(d), 4);
        }
        for (float v : p->value) {
            put_bytes(out, std::bit_cast<std::uint32_t>(v), 4);
        }
    }

    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
        if (!f) {
            throw std::runtime_error("checkpoint: write failed " + tmp.string());
        }
    }
    std::filesystem::rename(tmp, path);
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) {
        throw FormatError("checkpoint: cannot open " + path.string(), 0);
    }
    const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    Cursor c(bytes);
    if (c.str(4) != std::string(kMagic, 4)) {
        throw FormatError("checkpoint: bad magic", 0);
    }
    if (c.get(4) != kCheckpointVersion) {
        throw FormatError("checkpoint: unsupported version", 4);
    }
    const std::size_t json_len = c.get(4);
    const std::size_t json_at = c.pos();
    LoadedCheckpoint out;
    try {
        out.meta = nlohmann::json::parse(c.str(json_len));
    } catch (const nlohmann::json::parse_error&) {
        throw FormatError("checkpoint: header is not valid JSON", json_at);
    }
    if (!out.meta.contains("model")) {
        throw FormatError("checkpoint: header has no model config", json_at);
    }

    std::map<std::string, std::pair<std::vector<int>, std::vector<float>>> blobs;
    const std::size_t count = c.get(4);
    for (std::size_t i = 0; i < count; ++i) {
        const std::size_t name_len = c.get(2);
        std::string name = c.str(name_len);
        const int rank = static_cast<int>(c.get(1));
        std::vector<int> shape(rank);
        std::size_t n = 1;
        for (int& d : shape) {
            d = static_cast<int>(c.get(4));
            n *= static_cast<std::size_t>(d);
        }
        c.need(4 * n);
        std::vector<float> values(n);
        for (float& v : values) {
            v = std::bit_cast<float>(static_cast<std::uint32_t>(c.get(4)));
        }
        blobs.emplace(std::move(name), std::make_pair(std::move(shape), std::move(values)));
    }
    if (!c.done()) {
        throw FormatError("checkpoint: trailing bytes", c.pos());
    }

    out.model = std::make_unique<SpikingVgg<float>>(model_config_from_json(out.meta.at("model")), 0);
    const auto params = out.model->parameters();
    if (params.size() != blobs.size()) {
        throw DomainError("checkpoint: blob count does not match the model config");
    }
    for (Param<float>* p : params) {
        auto it = blobs.find(p->name);
        if (it == blobs.end() || it->second.first != p->shape) {
            throw DomainError("checkpoint: missing or misshaped blob '" + p->name + "'");
        }
        p->value = std::move(it->second.second);
    }
    return out;
}

}  // namespace msx::snn
