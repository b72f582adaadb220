#include "sparselab/data_io.hpp"

#include "sparselab/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <bit>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <sstream>

namespace sparselab {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

constexpr std::uint32_t kIdxImages = 0x00000803;
constexpr std::uint32_t kIdxLabels = 0x00000801;
constexpr std::size_t kCifarRecord = 3073;

std::uint32_t read_be32(const std::vector<std::uint8_t>& bytes, std::size_t offset, const fs::path& file) {
    if (offset + 4 > bytes.size()) {
        throw FormatError(file.string() + ": truncated header at offset " + std::to_string(offset));
    }
    return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
           (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

std::vector<std::uint8_t> float_bytes(const Tensor& t) {
    std::vector<std::uint8_t> out(t.size() * 4);
    for (std::size_t i = 0; i < t.size(); ++i) {
        std::uint32_t u = std::bit_cast<std::uint32_t>(t[i]);
        for (int b = 0; b < 4; ++b) {
            out[i * 4 + static_cast<std::size_t>(b)] = static_cast<std::uint8_t>(u >> (8 * b));
        }
    }
    return out;
}

Tensor tensor_from_bytes(const std::vector<std::uint8_t>& bytes, Shape shape, const fs::path& file) {
    const std::size_t n = shape_size(shape);
    if (bytes.size() != n * 4) {
        throw PersistenceError(file.string() + ": expected " + std::to_string(n * 4) + " bytes, found " +
                               std::to_string(bytes.size()));
    }
    std::vector<float> data(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::uint32_t u = 0;
        for (int b = 0; b < 4; ++b) {
            u |= std::uint32_t{bytes[i * 4 + static_cast<std::size_t>(b)]} << (8 * b);
        }
        data[i] = std::bit_cast<float>(u);
    }
    return Tensor(std::move(shape), std::move(data));
}

Shape shape_from_json(const ojson& j) {
    Shape s;
    for (const auto& d : j) {
        s.push_back(d.get<std::size_t>());
    }
    return s;
}

// Writes `bytes` to dir/file and records shape and checksum in `entry`.
void write_entry(const fs::path& dir, const std::string& file, const std::vector<std::uint8_t>& bytes,
                 const Shape& shape, ojson& entry) {
    write_file(dir / file, bytes);
    entry["file"] = file;
    entry["shape"] = shape;
    entry["fnv1a64"] = hex64(fnv1a64(bytes));
}

std::vector<std::uint8_t> read_entry(const fs::path& dir, const ojson& entry) {
    const std::string file = entry.at("file").get<std::string>();
    auto bytes = read_file(dir / file);
    const std::string expected = entry.at("fnv1a64").get<std::string>();
    if (hex64(fnv1a64(bytes)) != expected) {
        throw PersistenceError((dir / file).string() + ": checksum mismatch (expected " + expected + ")");
    }
    return bytes;
}

} // namespace

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes, std::uint64_t hash) {
    for (std::uint8_t b : bytes) {
        hash ^= b;
        hash *= 0x100000001b3ull;
    }
    return hash;
}

std::uint64_t fnv1a64(std::string_view text) {
    return fnv1a64(std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::string hex64(std::uint64_t v) {
    static constexpr char digits[] = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = digits[v & 0xf];
        v >>= 4;
    }
    return out;
}

void write_file(const fs::path& path, std::span<const std::uint8_t> bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw PersistenceError("cannot write '" + path.string() + "'");
    }
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        throw PersistenceError("short write to '" + path.string() + "'");
    }
}

std::vector<std::uint8_t> read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw PersistenceError("cannot open '" + path.string() + "'");
    }
    return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

std::string read_text(const fs::path& path) {
    const auto bytes = read_file(path);
    return std::string(bytes.begin(), bytes.end());
}

void write_text(const fs::path& path, const std::string& text) {
    write_file(path, std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

Dataset load_mnist_idx(const fs::path& images, const fs::path& labels, std::string split) {
    std::vector<std::uint8_t> img;
    std::vector<std::uint8_t> lab;
    try {
        img = read_file(images);
        lab = read_file(labels);
    } catch (const PersistenceError& e) {
        throw FormatError(e.what());
    }
    if (const auto magic = read_be32(img, 0, images); magic != kIdxImages) {
        throw FormatError(images.string() + ": bad image magic 0x" + hex64(magic).substr(8) + " at offset 0");
    }
    if (const auto magic = read_be32(lab, 0, labels); magic != kIdxLabels) {
        throw FormatError(labels.string() + ": bad label magic 0x" + hex64(magic).substr(8) + " at offset 0");
    }
    const std::size_t n = read_be32(img, 4, images);
    const std::size_t rows = read_be32(img, 8, images);
    const std::size_t cols = read_be32(img, 12, images);
    const std::size_t n_labels = read_be32(lab, 4, labels);
    if (n != n_labels) {
        throw FormatError(labels.string() + ": label count " + std::to_string(n_labels) + " at offset 4 does not match " +
                          std::to_string(n) + " images");
    }
    const std::size_t pixels = rows * cols;
    if (img.size() != 16 + n * pixels) {
        throw FormatError(images.string() + ": expected " + std::to_string(16 + n * pixels) + " bytes, file has " +
                          std::to_string(img.size()) + " (truncated at offset " +
                          std::to_string(std::min(img.size(), 16 + n * pixels)) + ")");
    }
    if (lab.size() != 8 + n) {
        throw FormatError(labels.string() + ": expected " + std::to_string(8 + n) + " bytes, file has " +
                          std::to_string(lab.size()) + " (truncated at offset " +
                          std::to_string(std::min(lab.size(), 8 + n)) + ")");
    }
    Dataset ds;
    ds.split = std::move(split);
    ds.images = Tensor({n, 1, rows, cols});
    for (std::size_t i = 0; i < n * pixels; ++i) {
        ds.images[i] = static_cast<float>(img[16 + i]) / 255.0f;
    }
    ds.labels.assign(lab.begin() + 8, lab.end());
    for (std::size_t i = 0; i < n; ++i) {
        if (ds.labels[i] > 9) {
            throw FormatError(labels.string() + ": label " + std::to_string(ds.labels[i]) + " out of range at offset " +
                              std::to_string(8 + i));
        }
    }
    return ds;
}

Dataset load_mnist(const fs::path& dir, bool train) {
    const std::string prefix = train ? "train" : "t10k";
    return load_mnist_idx(dir / (prefix + "-images-idx3-ubyte"), dir / (prefix + "-labels-idx1-ubyte"),
                          train ? "train" : "test");
}

Dataset load_cifar10_binary(std::span<const fs::path> batches, std::string split) {
    std::vector<std::uint8_t> all;
    for (const auto& path : batches) {
        std::vector<std::uint8_t> bytes;
        try {
            bytes = read_file(path);
        } catch (const PersistenceError& e) {
            throw FormatError(e.what());
        }
        if (bytes.size() % kCifarRecord != 0) {
            throw FormatError(path.string() + ": size " + std::to_string(bytes.size()) +
                              " is not a multiple of the 3073-byte record (partial record at offset " +
                              std::to_string(bytes.size() / kCifarRecord * kCifarRecord) + ")");
        }
        for (std::size_t off = 0; off < bytes.size(); off += kCifarRecord) {
            if (bytes[off] > 9) {
                throw FormatError(path.string() + ": label " + std::to_string(bytes[off]) + " out of range at offset " +
                                  std::to_string(off));
            }
        }
        all.insert(all.end(), bytes.begin(), bytes.end());
    }
    const std::size_t n = all.size() / kCifarRecord;
    Dataset ds;
    ds.split = std::move(split);
    ds.images = Tensor({n, 3, 32, 32});
    ds.labels.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::uint8_t* rec = all.data() + i * kCifarRecord;
        ds.labels[i] = rec[0];
        for (std::size_t p = 0; p < kCifarRecord - 1; ++p) {
            ds.images[i * (kCifarRecord - 1) + p] = static_cast<float>(rec[1 + p]) / 255.0f;
        }
    }
    return ds;
}

Dataset load_cifar10(const fs::path& dir, bool train) {
    std::vector<fs::path> files;
    if (train) {
        for (int i = 1; i <= 5; ++i) {
            files.push_back(dir / ("data_batch_" + std::to_string(i) + ".bin"));
        }
    } else {
        files.push_back(dir / "test_batch.bin");
    }
    return load_cifar10_binary(files, train ? "train" : "test");
}

fs::path default_data_root() {
    if (const char* env = std::getenv("SPARSELAB_DATA"); env != nullptr && *env != '\0') {
        return env;
    }
    return "data";
}

Dataset load_dataset(const std::string& name, const fs::path& root, bool train) {
    if (name == "mnist") {
        return load_mnist(root / "mnist", train);
    }
    if (name == "cifar10") {
        return load_cifar10(root / "cifar-10-batches-bin", train);
    }
    if (name == "synthetic") {
        return make_synthetic(train ? 512 : 256, train ? 1 : 2);
    }
    throw ConfigError("unknown dataset '" + name + "' (expected mnist, cifar10 or synthetic)");
}

Dataset make_synthetic(std::size_t n, std::uint64_t seed) {
    constexpr std::size_t kClasses = 10, kSide = 28, kPixels = kSide * kSide;
    // fixed class templates shared by every split
    RngStream templates(0x7e3, StreamId::init);
    constexpr std::size_t kBlock = 4, kCells = kSide / kBlock;
    std::vector<float> proto(kClasses * kPixels);
    for (std::size_t c = 0; c < kClasses; ++c) {
        for (std::size_t by = 0; by < kCells; ++by) {
            for (std::size_t bx = 0; bx < kCells; ++bx) {
                if (templates.uniform01() >= 0.3f) {
                    continue;
                }
                for (std::size_t y = 0; y < kBlock; ++y) {
                    for (std::size_t x = 0; x < kBlock; ++x) {
                        proto[c * kPixels + (by * kBlock + y) * kSide + bx * kBlock + x] = 1.0f;
                    }
                }
            }
        }
    }
    RngStream rng(seed, StreamId::shuffle);
    Dataset d{Tensor({n, 1, kSide, kSide}), std::vector<std::uint8_t>(n), "synthetic"};
    for (std::size_t i = 0; i < n; ++i) {
        const auto label = static_cast<std::uint8_t>(rng.below(kClasses));
        d.labels[i] = label;
        for (std::size_t p = 0; p < kPixels; ++p) {
            const float noise = rng.uniform01() * 0.4f;
            d.images[i * kPixels + p] = proto[label * kPixels + p] * 0.6f + noise;
        }
    }
    return d;
}

void save_masks(const fs::path& dir, const MaskSet& masks) {
    fs::create_directories(dir);
    ojson manifest;
    manifest["version"] = kCheckpointVersion;
    manifest["iteration"] = masks.iteration;
    manifest["layers"] = ojson::array();
    for (const auto& m : masks.masks) {
        ojson entry;
        entry["name"] = m.name;
        write_entry(dir, m.name + ".mask", m.bits, m.shape, entry);
        manifest["layers"].push_back(entry);
    }
    write_text(dir / "manifest.json", manifest.dump(2) + "\n");
}

MaskSet load_masks(const fs::path& dir) {
    ojson manifest;
    try {
        manifest = ojson::parse(read_text(dir / "manifest.json"));
    } catch (const ojson::exception& e) {
        throw PersistenceError((dir / "manifest.json").string() + ": " + e.what());
    }
    if (manifest.value("version", 0) != kCheckpointVersion) {
        throw PersistenceError((dir / "manifest.json").string() + ": unsupported version");
    }
    MaskSet set;
    set.iteration = manifest.at("iteration").get<std::size_t>();
    for (const auto& entry : manifest.at("layers")) {
        Mask m;
        m.name = entry.at("name").get<std::string>();
        m.shape = shape_from_json(entry.at("shape"));
        m.bits = read_entry(dir, entry);
        if (m.bits.size() != shape_size(m.shape)) {
            throw PersistenceError((dir / (m.name + ".mask")).string() + ": size does not match shape");
        }
        for (std::uint8_t b : m.bits) {
            if (b > 1) {
                throw PersistenceError((dir / (m.name + ".mask")).string() + ": mask bytes must be 0x00 or 0x01");
            }
        }
        set.masks.push_back(std::move(m));
    }
    return set;
}

void save_checkpoint(const fs::path& dir, const Checkpoint& ckpt) {
    fs::create_directories(dir);
    ojson manifest;
    manifest["version"] = kCheckpointVersion;
    manifest["architecture"] = ojson::parse(serialize_architecture(ckpt.net.arch));
    manifest["parameters"] = ojson::array();
    for (const auto& p : ckpt.net.params) {
        ojson entry;
        entry["name"] = p.name;
        ojson w;
        write_entry(dir, p.name + ".weight.f32", float_bytes(p.weight), p.weight.shape(), w);
        ojson b;
        write_entry(dir, p.name + ".bias.f32", float_bytes(p.bias), p.bias.shape(), b);
        entry["weight"] = w;
        entry["bias"] = b;
        manifest["parameters"].push_back(entry);
    }
    manifest["mask_iteration"] = ckpt.masks.iteration;
    manifest["masks"] = ojson::array();
    for (const auto& m : ckpt.masks.masks) {
        ojson entry;
        entry["name"] = m.name;
        write_entry(dir, m.name + ".mask", m.bits, m.shape, entry);
        manifest["masks"].push_back(entry);
    }
    manifest["rng"] = ojson::object();
    for (const auto& [name, state] : ckpt.rng_state) {
        manifest["rng"][name] = state;
    }
    write_text(dir / "manifest.json", manifest.dump(2) + "\n");
}

Checkpoint load_checkpoint(const fs::path& dir) {
    ojson manifest;
    try {
        manifest = ojson::parse(read_text(dir / "manifest.json"));
    } catch (const ojson::exception& e) {
        throw PersistenceError((dir / "manifest.json").string() + ": " + e.what());
    }
    if (manifest.value("version", 0) != kCheckpointVersion) {
        throw PersistenceError((dir / "manifest.json").string() + ": checkpoint version " +
                               std::to_string(manifest.value("version", 0)) + " is not " +
                               std::to_string(kCheckpointVersion));
    }
    try {
        Checkpoint ckpt;
        ckpt.net = zero_network(parse_architecture(manifest.at("architecture").dump()));
        const auto& params = manifest.at("parameters");
        if (params.size() != ckpt.net.params.size()) {
            throw StateError((dir / "manifest.json").string() + ": parameter count does not match architecture");
        }
        for (std::size_t i = 0; i < params.size(); ++i) {
            Parameter& p = ckpt.net.params[i];
            if (params[i].at("name").get<std::string>() != p.name) {
                throw StateError((dir / "manifest.json").string() + ": parameter '" +
                                 params[i].at("name").get<std::string>() + "' where '" + p.name + "' expected");
            }
            const Shape ws = shape_from_json(params[i].at("weight").at("shape"));
            const Shape bs = shape_from_json(params[i].at("bias").at("shape"));
            if (ws != p.weight.shape() || bs != p.bias.shape()) {
                throw StateError((dir / "manifest.json").string() + ": shape mismatch for '" + p.name + "'");
            }
            p.weight = tensor_from_bytes(read_entry(dir, params[i].at("weight")), ws, dir / (p.name + ".weight.f32"));
            p.bias = tensor_from_bytes(read_entry(dir, params[i].at("bias")), bs, dir / (p.name + ".bias.f32"));
        }
        ckpt.masks.iteration = manifest.value("mask_iteration", std::size_t{0});
        for (const auto& entry : manifest.at("masks")) {
            Mask m;
            m.name = entry.at("name").get<std::string>();
            m.shape = shape_from_json(entry.at("shape"));
            m.bits = read_entry(dir, entry);
            ckpt.masks.masks.push_back(std::move(m));
        }
        if (!ckpt.masks.masks.empty()) {
            ckpt.masks.check_against(ckpt.net.arch);
        }
        for (const auto& [name, state] : manifest.at("rng").items()) {
            ckpt.rng_state[name] = state.get<std::string>();
        }
        return ckpt;
    } catch (const ojson::exception& e) {
        throw PersistenceError((dir / "manifest.json").string() + ": " + e.what());
    }
}

Checkpoint load_checkpoint(const fs::path& dir, const ArchitectureSpec& expected) {
    Checkpoint ckpt = load_checkpoint(dir);
    if (!(ckpt.net.arch == expected)) {
        throw StateError(dir.string() + ": checkpoint architecture '" + ckpt.net.arch.name +
                         "' does not match expected '" + expected.name + "'");
    }
    return ckpt;
}

} // namespace sparselab
