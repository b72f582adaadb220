#pragma once

#include <cstdint>
#include <random>
#include <string>

namespace sparselab {

enum class StreamId : std::uint32_t {
    init = 1,
    shuffle = 2,
    prune_random = 3,
};

const char* stream_name(StreamId id);

// Seeded random stream keyed by (seed, purpose). The engine is mt19937_64
// seeded through std::seed_seq, both fully specified by the standard, and
// the derived draws below use only integer arithmetic and exact float
// conversions, so sequences are bit-identical across platforms.
class RngStream {
public:
    RngStream(std::uint64_t seed, StreamId id);

    std::uint64_t seed() const { return seed_; }
    StreamId id() const { return id_; }

    std::uint64_t next_u64() { return engine_(); }
    // Uniform on [0, 1) with 24 bits of resolution.
    float uniform01();
    // Uniform on [lo, hi).
    float uniform(float lo, float hi);
    // Uniform integer on [0, n); n > 0.
    std::uint64_t below(std::uint64_t n);

    // Engine state as text; restore() resumes the exact sequence.
    std::string state() const;
    void restore(const std::string& state);

    friend bool operator==(const RngStream& a, const RngStream& b) {
        return a.seed_ == b.seed_ && a.id_ == b.id_ && a.engine_ == b.engine_;
    }

private:
    std::uint64_t seed_;
    StreamId id_;
    std::mt19937_64 engine_;
};

} // namespace sparselab
