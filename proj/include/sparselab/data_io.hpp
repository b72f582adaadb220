#pragma once

#include "sparselab/dataset.hpp"
#include "sparselab/mask.hpp"
#include "sparselab/nn.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace sparselab {

// Big-endian IDX files (images magic 0x00000803, labels 0x00000801);
// pixels divided by 255.
Dataset load_mnist_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
                       std::string split = "");
// train-* or t10k-* files under `dir`.
Dataset load_mnist(const std::filesystem::path& dir, bool train);

// CIFAR-10 binary batches: records of one label byte plus 3072 channel-major
// pixel bytes.
Dataset load_cifar10_binary(std::span<const std::filesystem::path> batches, std::string split = "");
// data_batch_1..5.bin or test_batch.bin under `dir`.
Dataset load_cifar10(const std::filesystem::path& dir, bool train);

// Dataset root: $SPARSELAB_DATA, falling back to ./data.
std::filesystem::path default_data_root();
// "mnist", "cifar10" or "synthetic".
Dataset load_dataset(const std::string& name, const std::filesystem::path& root, bool train);
// Small MNIST-shaped dataset of noisy class templates, for tests and smoke
// runs without downloaded data.
Dataset make_synthetic(std::size_t n, std::uint64_t seed);

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes, std::uint64_t hash = 0xcbf29ce484222325ull);
std::uint64_t fnv1a64(std::string_view text);
std::string hex64(std::uint64_t v);

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);

// Mask directory: <layer>.mask files (one 0x00/0x01 byte per weight,
// row-major) plus manifest.json with layer names, shapes and the iteration.
void save_masks(const std::filesystem::path& dir, const MaskSet& masks);
MaskSet load_masks(const std::filesystem::path& dir);

inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
    Network net;
    MaskSet masks;
    std::map<std::string, std::string> rng_state;  // stream name -> engine state
};

// Checkpoint directory: manifest.json (version, architecture, per-file
// shape and FNV-1a checksum, RNG state), raw little-endian float32 tensor
// files and mask byte files. Round trips are bitwise exact.
void save_checkpoint(const std::filesystem::path& dir, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& dir);
// Also checks the stored architecture against `expected`; StateError on mismatch.
Checkpoint load_checkpoint(const std::filesystem::path& dir, const ArchitectureSpec& expected);

} // namespace sparselab
