#include "sparselab/analytics.hpp"
#include "sparselab/data_io.hpp"
#include "sparselab/error.hpp"

#include <doctest.h>

#include <filesystem>
#include <string>

using namespace sparselab;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("sparselab_test_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

void put_be32(std::vector<std::uint8_t>& v, std::uint32_t x) {
    for (int s = 24; s >= 0; s -= 8) {
        v.push_back(static_cast<std::uint8_t>(x >> s));
    }
}

void write_idx(const fs::path& dir, std::uint32_t image_magic, std::size_t n, std::size_t truncate = 0) {
    std::vector<std::uint8_t> img, lab;
    put_be32(img, image_magic);
    put_be32(img, static_cast<std::uint32_t>(n));
    put_be32(img, 28);
    put_be32(img, 28);
    for (std::size_t i = 0; i < n * 784; ++i) {
        img.push_back(static_cast<std::uint8_t>(i % 256));
    }
    img.resize(img.size() - truncate);
    put_be32(lab, 0x00000801);
    put_be32(lab, static_cast<std::uint32_t>(n));
    for (std::size_t i = 0; i < n; ++i) {
        lab.push_back(static_cast<std::uint8_t>(i % 10));
    }
    write_file(dir / "images", img);
    write_file(dir / "labels", lab);
}

} // namespace

TEST_CASE("idx parsing scales pixels and reads labels") {
    const fs::path dir = scratch("idx");
    write_idx(dir, 0x00000803, 3);
    const Dataset d = load_mnist_idx(dir / "images", dir / "labels", "test");
    CHECK(d.size() == 3);
    CHECK(d.images.shape() == Shape{3, 1, 28, 28});
    CHECK(d.images[255] == 1.0f);
    CHECK(d.images[1] == 1.0f / 255.0f);
    CHECK(d.labels[2] == 2);
}

TEST_CASE("idx format errors name the file") {
    const fs::path dir = scratch("idx_bad");
    write_idx(dir, 0x00000804, 2);
    try {
        load_mnist_idx(dir / "images", dir / "labels");
        FAIL("expected a FormatError");
    } catch (const FormatError& e) {
        CHECK(std::string(e.what()).find("images") != std::string::npos);
    }
    write_idx(dir, 0x00000803, 2, 10);
    CHECK_THROWS_AS(load_mnist_idx(dir / "images", dir / "labels"), FormatError);
}

TEST_CASE("cifar records are 3073 bytes, label first, channel-major") {
    const fs::path dir = scratch("cifar");
    std::vector<std::uint8_t> bytes;
    for (int r = 0; r < 2; ++r) {
        bytes.push_back(static_cast<std::uint8_t>(9 - r));
        for (int i = 0; i < 3072; ++i) {
            bytes.push_back(static_cast<std::uint8_t>(i / 1024 * 100));
        }
    }
    write_file(dir / "batch.bin", bytes);
    const fs::path files[] = {dir / "batch.bin"};
    const Dataset d = load_cifar10_binary(files);
    CHECK(d.size() == 2);
    CHECK(d.labels[0] == 9);
    CHECK(d.images.shape() == Shape{2, 3, 32, 32});
    CHECK(d.images[1024] == 100.0f / 255.0f);
    CHECK(d.images[3072 + 2048] == 200.0f / 255.0f);
    bytes.pop_back();
    write_file(dir / "batch.bin", bytes);
    CHECK_THROWS_AS(load_cifar10_binary(files), FormatError);
}

TEST_CASE("MNIST test split has 10,000 examples when the data is present") {
    const fs::path dir = default_data_root() / "mnist";
    if (!fs::exists(dir / "t10k-labels-idx1-ubyte")) {
        MESSAGE("MNIST not found under " << dir.string() << "; skipping");
        return;
    }
    const auto header = read_file(dir / "t10k-images-idx3-ubyte");
    CHECK(header[7] + 256 * header[6] == 10000);
    const Dataset d = load_mnist(dir, false);
    CHECK(d.size() == 10000);
    CHECK(d.example_shape() == Shape{1, 28, 28});
}

TEST_CASE("two collapsed constant-class models on MNIST agree everywhere at the majority share") {
    const fs::path dir = default_data_root() / "mnist";
    if (!fs::exists(dir / "t10k-labels-idx1-ubyte")) {
        MESSAGE("MNIST not found under " << dir.string() << "; skipping");
        return;
    }
    const Dataset test = load_mnist(dir, false);
    Network net = zero_network(lenet());
    net.param("fc3").bias[1] = 1.0f;
    const Tensor p = softmax(predict_logits(net, test));
    const Tensor members[] = {p, p};
    const EnsembleResult e = ensemble_average(members, test.labels);
    CHECK(e.accuracy == doctest::Approx(11.35));
    const std::vector<std::uint32_t> preds[] = {e.predictions, e.predictions};
    const auto m = agreement_matrix(preds);
    CHECK(m[0][0] == 10000);
    CHECK(m[0][1] == 10000);
    CHECK(m[1][0] == m[0][1]);
}

TEST_CASE("checkpoint round trip is bitwise exact") {
    const fs::path dir = scratch("ckpt");
    RngStream init(3, StreamId::init), shuffle(3, StreamId::shuffle);
    shuffle.next_u64();
    Checkpoint c{init_network(lenet(), init), MaskSet::all_ones(lenet()), {{"shuffle", shuffle.state()}}};
    c.net.params[0].weight[0] = -0.0f;
    c.masks.masks[2].bits[5] = 0;
    c.masks.iteration = 4;
    save_checkpoint(dir, c);
    const Checkpoint r = load_checkpoint(dir, lenet());
    CHECK(bitwise_equal(r.net, c.net));
    CHECK(r.masks == c.masks);
    RngStream resumed(3, StreamId::shuffle);
    resumed.restore(r.rng_state.at("shuffle"));
    CHECK(resumed.next_u64() == shuffle.next_u64());

    const auto manifest = read_text(dir / "manifest.json");
    for (const auto& p : c.net.params) {
        CHECK(manifest.find(p.name + ".weight.f32") != std::string::npos);
        CHECK(manifest.find(p.name + ".bias.f32") != std::string::npos);
    }

    ArchitectureSpec other = lenet();
    other.layers.back() = Linear{84, 9};
    CHECK_THROWS_AS(load_checkpoint(dir, other), StateError);

    auto bytes = read_file(dir / "fc2.weight.f32");
    bytes[10] ^= 1;
    write_file(dir / "fc2.weight.f32", bytes);
    CHECK_THROWS_AS(load_checkpoint(dir), PersistenceError);

    save_checkpoint(dir, c);
    std::string text = read_text(dir / "manifest.json");
    text.replace(text.find("\"version\": 1"), 12, "\"version\": 7");
    write_text(dir / "manifest.json", text);
    CHECK_THROWS_AS(load_checkpoint(dir), PersistenceError);
}

TEST_CASE("mask directories round trip") {
    const fs::path dir = scratch("masks");
    MaskSet m = MaskSet::all_ones(lenet());
    m.iteration = 2;
    m.masks[1].bits[0] = 0;
    save_masks(dir, m);
    CHECK(load_masks(dir) == m);
    CHECK(read_file(dir / "conv2.mask").size() == 864);
}

TEST_CASE("fnv1a64 reference values") {
    CHECK(hex64(fnv1a64(std::string_view(""))) == "cbf29ce484222325");
    CHECK(hex64(fnv1a64(std::string_view("a"))) == "af63dc4c8601ec8c");
}
