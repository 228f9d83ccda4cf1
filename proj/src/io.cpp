#include "advdet/io.hpp"

#include <unistd.h>

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>

namespace advdet::io {

namespace {

constexpr std::uint16_t kFormatVersion = 1;
constexpr std::uint16_t kFlagLabels = 1u << 0;
constexpr std::uint16_t kFlagMetadata = 1u << 1;
constexpr std::uint16_t kFlagTestSplit = 1u << 2;

class Writer {
public:
    void magic(const char tag[4]) { buf_.insert(buf_.end(), tag, tag + 4); }
    void u8(std::uint8_t v) { buf_.push_back(v); }
    void u16(std::uint16_t v) { le(&v, 2); }
    void u32(std::uint32_t v) { le(&v, 4); }
    void u64(std::uint64_t v) { le(&v, 8); }
    void i32(std::int32_t v) { le(&v, 4); }
    void f32(float v) { le(&v, 4); }
    void f64(double v) { le(&v, 8); }
    void bytes(const void* p, std::size_t n) {
        const auto* b = static_cast<const std::uint8_t*>(p);
        buf_.insert(buf_.end(), b, b + n);
    }
    void tensor(const Tensor& t) {
        u8(static_cast<std::uint8_t>(t.shape().size()));
        for (int d : t.shape()) u32(static_cast<std::uint32_t>(d));
        for (float v : t.values()) f32(v);
    }
    const std::vector<std::uint8_t>& data() const { return buf_; }

private:
    void le(const void* p, std::size_t n) {
        // Host is little-endian on every supported target; memcpy keeps the
        // layout explicit should that ever change.
        static_assert(std::endian::native == std::endian::little);
        bytes(p, n);
    }
    std::vector<std::uint8_t> buf_;
};

class Reader {
public:
    Reader(std::vector<std::uint8_t> data, std::string path)
        : data_(std::move(data)), path_(std::move(path)) {}

    void magic(const char tag[4]) {
        const std::size_t at = pos_;
        need(4, "magic bytes");
        if (std::memcmp(data_.data() + at, tag, 4) != 0) {
            fail(at, std::string("expected magic '") + std::string(tag, 4) + "', found '" +
                         std::string(reinterpret_cast<const char*>(data_.data() + at), 4) + "'");
        }
        pos_ = at + 4;
    }
    void version(std::uint16_t expected) {
        const std::size_t at = pos_;
        const std::uint16_t v = u16();
        if (v != expected) {
            fail(at, "unsupported format version " + std::to_string(v) + ", expected " +
                         std::to_string(expected));
        }
    }
    std::uint8_t u8() { return take<std::uint8_t>("u8 field"); }
    std::uint16_t u16() { return take<std::uint16_t>("u16 field"); }
    std::uint32_t u32() { return take<std::uint32_t>("u32 field"); }
    std::uint64_t u64() { return take<std::uint64_t>("u64 field"); }
    std::int32_t i32() { return take<std::int32_t>("i32 field"); }
    float f32() { return take<float>("f32 field"); }
    double f64() { return take<double>("f64 field"); }
    std::string str(std::size_t n) {
        need(n, "string payload");
        std::string s(reinterpret_cast<const char*>(data_.data() + pos_), n);
        pos_ += n;
        return s;
    }
    Tensor tensor() {
        const std::size_t rank = u8();
        if (rank < 1 || rank > 4) fail(pos_ - 1, "tensor rank " + std::to_string(rank) + " out of range [1,4]");
        std::vector<int> shape(rank);
        for (auto& d : shape) {
            const std::uint32_t v = u32();
            if (v == 0 || v > (1u << 24)) fail(pos_ - 4, "tensor dimension " + std::to_string(v) + " out of range");
            d = static_cast<int>(v);
        }
        std::size_t count = 1;
        for (int d : shape) count *= static_cast<std::size_t>(d);
        need(count * 4, "tensor payload of " + std::to_string(count) + " floats");
        Tensor t(shape);
        std::memcpy(t.values().data(), data_.data() + pos_, count * 4);
        pos_ += count * 4;
        return t;
    }
    void expect_end() {
        if (pos_ != data_.size()) {
            fail(pos_, std::to_string(data_.size() - pos_) + " trailing bytes after the last record");
        }
    }

private:
    template <typename T>
    T take(const char* what) {
        need(sizeof(T), what);
        T v;
        std::memcpy(&v, data_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return v;
    }
    void need(std::size_t n, const std::string& what) {
        if (data_.size() - pos_ < n) {
            fail(pos_, "truncated: need " + std::to_string(n) + " bytes for " + what + ", have " +
                           std::to_string(data_.size() - pos_));
        }
    }
    [[noreturn]] void fail(std::size_t at, const std::string& msg) {
        throw std::runtime_error(path_ + ": at byte offset " + std::to_string(at) + ": " + msg);
    }

    std::vector<std::uint8_t> data_;
    std::string path_;
    std::size_t pos_ = 0;
};

std::vector<std::uint8_t> read_all_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error(path + ": cannot open for reading");
    std::vector<std::uint8_t> data((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
    if (in.bad()) throw std::runtime_error(path + ": read failure");
    return data;
}

}  // namespace

void write_bytes_atomic(const std::string& path, const std::vector<std::uint8_t>& bytes) {
    namespace fs = std::filesystem;
    const fs::path target(path);
    if (target.has_parent_path()) fs::create_directories(target.parent_path());
    const fs::path tmp = target.string() + ".tmp." + std::to_string(::getpid());
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error(tmp.string() + ": cannot open for writing");
        out.write(reinterpret_cast<const char*>(bytes.data()),
                  static_cast<std::streamsize>(bytes.size()));
        if (!out) throw std::runtime_error(tmp.string() + ": write failure");
    }
    fs::rename(tmp, target);
}

void write_text_file_atomic(const std::string& path, const std::string& content) {
    std::vector<std::uint8_t> bytes(content.begin(), content.end());
    write_bytes_atomic(path, bytes);
}

std::string read_text_file(const std::string& path) {
    const auto bytes = read_all_bytes(path);
    return std::string(bytes.begin(), bytes.end());
}

void save_container(const TensorContainer& container, const std::string& path) {
    std::uint16_t flags = 0;
    bool any_label = false, any_meta = false;
    for (const auto& r : container.records) {
        any_label |= r.label.has_value();
        any_meta |= !r.metadata.empty();
    }
    if (any_label) flags |= kFlagLabels;
    if (any_meta) flags |= kFlagMetadata;
    if (container.test_split) flags |= kFlagTestSplit;

    Writer w;
    w.magic("ADVT");
    w.u16(kFormatVersion);
    w.u16(flags);
    w.u16(static_cast<std::uint16_t>(container.num_classes));
    w.u64(container.records.size());
    for (const auto& r : container.records) {
        w.tensor(r.tensor);
        if (any_label) {
            if (!r.label) throw std::invalid_argument(path + ": mixed labeled and unlabeled records");
            if (container.num_classes <= 0 || *r.label < 0 || *r.label >= container.num_classes) {
                throw std::invalid_argument(path + ": label " + std::to_string(*r.label) +
                                            " outside [0," + std::to_string(container.num_classes) + ")");
            }
            w.u16(static_cast<std::uint16_t>(*r.label));
        }
        if (any_meta) {
            w.u32(static_cast<std::uint32_t>(r.metadata.size()));
            w.bytes(r.metadata.data(), r.metadata.size());
        }
    }
    write_bytes_atomic(path, w.data());
}

TensorContainer load_container(const std::string& path) {
    Reader r(read_all_bytes(path), path);
    r.magic("ADVT");
    r.version(kFormatVersion);
    const std::uint16_t flags = r.u16();
    TensorContainer c;
    c.num_classes = r.u16();
    c.test_split = (flags & kFlagTestSplit) != 0;
    const std::uint64_t count = r.u64();
    c.records.reserve(count);
    for (std::uint64_t i = 0; i < count; ++i) {
        TensorRecord rec;
        rec.tensor = r.tensor();
        if (flags & kFlagLabels) {
            const std::uint16_t label = r.u16();
            if (label >= static_cast<std::uint16_t>(c.num_classes)) {
                throw std::runtime_error(path + ": record " + std::to_string(i) + " label " +
                                         std::to_string(label) + " outside [0," +
                                         std::to_string(c.num_classes) + ")");
            }
            rec.label = label;
        }
        if (flags & kFlagMetadata) rec.metadata = r.str(r.u32());
        c.records.push_back(std::move(rec));
    }
    r.expect_end();
    return c;
}

void save_dataset(const LabeledDataset& dataset, const std::string& path) {
    dataset.validate();
    TensorContainer c;
    c.num_classes = dataset.num_classes;
    c.test_split = dataset.split == Split::Test;
    c.records.reserve(dataset.size());
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        c.records.push_back({dataset.images[i], dataset.labels[i], ""});
    }
    save_container(c, path);
}

LabeledDataset load_dataset(const std::string& path) {
    const TensorContainer c = load_container(path);
    LabeledDataset d;
    d.num_classes = c.num_classes;
    d.split = c.test_split ? Split::Test : Split::Train;
    d.images.reserve(c.records.size());
    d.labels.reserve(c.records.size());
    for (const auto& r : c.records) {
        if (!r.label) throw std::runtime_error(path + ": dataset records must carry labels");
        d.images.push_back(r.tensor);
        d.labels.push_back(*r.label);
    }
    d.validate();
    return d;
}

void save_checkpoint(const Model& model, const std::string& path) {
    const ModelConfig& cfg = model.config();
    Writer w;
    w.magic("ADVK");
    w.u16(kFormatVersion);
    w.u32(static_cast<std::uint32_t>(cfg.height));
    w.u32(static_cast<std::uint32_t>(cfg.width));
    w.u32(static_cast<std::uint32_t>(cfg.channels));
    w.u32(static_cast<std::uint32_t>(cfg.num_classes));
    w.u32(cfg.seed);
    w.u32(static_cast<std::uint32_t>(cfg.layers.size()));
    for (const LayerSpec& l : cfg.layers) {
        w.u8(static_cast<std::uint8_t>(l.kind));
        w.i32(l.units);
        w.i32(l.kernel);
        w.u8(l.padding == Padding::Same ? 0 : 1);
    }
    w.i32(model.meta().epochs);
    w.f64(model.meta().train_accuracy);
    w.f64(model.meta().test_accuracy);
    w.u32(static_cast<std::uint32_t>(model.params().size()));
    for (const Tensor& t : model.params()) w.tensor(t);
    write_bytes_atomic(path, w.data());
}

Model load_checkpoint(const std::string& path) {
    Reader r(read_all_bytes(path), path);
    r.magic("ADVK");
    r.version(kFormatVersion);
    ModelConfig cfg;
    cfg.height = static_cast<int>(r.u32());
    cfg.width = static_cast<int>(r.u32());
    cfg.channels = static_cast<int>(r.u32());
    cfg.num_classes = static_cast<int>(r.u32());
    cfg.seed = r.u32();
    const std::uint32_t layer_count = r.u32();
    if (layer_count > 64) throw std::runtime_error(path + ": implausible layer count");
    cfg.layers.resize(layer_count);
    for (auto& l : cfg.layers) {
        l.kind = static_cast<LayerKind>(r.u8());
        l.units = r.i32();
        l.kernel = r.i32();
        l.padding = r.u8() == 0 ? Padding::Same : Padding::Valid;
    }
    TrainMeta meta;
    meta.epochs = r.i32();
    meta.train_accuracy = r.f64();
    meta.test_accuracy = r.f64();
    const std::uint32_t param_count = r.u32();
    std::vector<Tensor> params;
    params.reserve(param_count);
    for (std::uint32_t i = 0; i < param_count; ++i) params.push_back(r.tensor());
    r.expect_end();
    return Model(std::move(cfg), std::move(params), meta);
}

void save_statistics(const ClassStatistics& stats, const std::string& path) {
    stats.validate();
    Writer w;
    w.magic("ADVS");
    w.u16(kFormatVersion);
    w.u64(stats.model_fingerprint);
    w.u16(static_cast<std::uint16_t>(stats.num_classes));
    w.u16(static_cast<std::uint16_t>(stats.distortions.size()));
    for (const Distortion& d : stats.distortions) {
        w.u8(static_cast<std::uint8_t>(d.kind));
        w.i32(d.param);
    }
    for (std::uint64_t c : stats.counts) w.u64(c);
    for (const auto& mu : stats.mu) {
        for (float v : mu) w.f32(v);
    }
    write_bytes_atomic(path, w.data());
}

ClassStatistics load_statistics(const std::string& path) {
    Reader r(read_all_bytes(path), path);
    r.magic("ADVS");
    r.version(kFormatVersion);
    ClassStatistics stats;
    stats.model_fingerprint = r.u64();
    stats.num_classes = r.u16();
    const std::uint16_t m = r.u16();
    stats.distortions.resize(m);
    for (auto& d : stats.distortions) {
        d.kind = static_cast<DistortionKind>(r.u8());
        d.param = r.i32();
    }
    stats.counts.resize(stats.num_classes);
    for (auto& c : stats.counts) c = r.u64();
    stats.mu.resize(stats.num_classes);
    const std::size_t len = static_cast<std::size_t>(stats.num_classes) * m;
    for (auto& mu : stats.mu) {
        mu.resize(len);
        for (auto& v : mu) v = r.f32();
    }
    r.expect_end();
    stats.validate();
    return stats;
}

}  // namespace advdet::io
