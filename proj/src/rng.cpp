#include "sparselab/rng.hpp"

#include "sparselab/error.hpp"

#include <limits>
#include <sstream>

namespace sparselab {

namespace {

std::mt19937_64 make_engine(std::uint64_t seed, StreamId id) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed & 0xffffffffu), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(id), 0x5eed1abu};
    return std::mt19937_64(seq);
}

} // namespace

const char* stream_name(StreamId id) {
    switch (id) {
    case StreamId::init: return "init";
    case StreamId::shuffle: return "shuffle";
    case StreamId::prune_random: return "prune_random";
    }
    return "unknown";
}

RngStream::RngStream(std::uint64_t seed, StreamId id) : seed_(seed), id_(id), engine_(make_engine(seed, id)) {}

float RngStream::uniform01() {
    // Top 24 bits, exactly representable as a float in [0, 1).
    return static_cast<float>(engine_() >> 40) * 0x1.0p-24f;
}

float RngStream::uniform(float lo, float hi) {
    const double u = static_cast<double>(engine_() >> 40) * 0x1.0p-24;
    return static_cast<float>(static_cast<double>(lo) + (static_cast<double>(hi) - lo) * u);
}

std::uint64_t RngStream::below(std::uint64_t n) {
    if (n == 0) {
        throw InputError("RngStream::below requires n > 0");
    }
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t x = engine_();
    while (x >= limit) {
        x = engine_();
    }
    return x % n;
}

std::string RngStream::state() const {
    std::ostringstream out;
    out << engine_;
    return out.str();
}

void RngStream::restore(const std::string& state) {
    std::istringstream in(state);
    std::mt19937_64 engine;
    in >> engine;
    if (in.fail()) {
        throw PersistenceError(std::string("corrupt RNG state for stream ") + stream_name(id_));
    }
    engine_ = engine;
}

} // namespace sparselab
