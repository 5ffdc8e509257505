#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace wsnloc {

using Rng = std::mt19937_64;

/// Derives a child seed from a master seed and a path of stream ids.
///
/// Every consumer that needs randomness inside a parallel region (one particle
/// at one SMC iteration, one prior draw of the PCRB average, one replicate)
/// gets its own stream keyed by its index, so results never depend on how
/// work is split across threads.
inline std::uint64_t derive_seed(std::uint64_t master,
                                 std::initializer_list<std::uint64_t> path) {
    std::vector<std::uint32_t> words;
    words.reserve(2 + 2 * path.size());
    auto push = [&words](std::uint64_t v) {
        words.push_back(static_cast<std::uint32_t>(v & 0xffffffffu));
        words.push_back(static_cast<std::uint32_t>(v >> 32));
    };
    push(master);
    for (auto id : path) push(id);
    std::seed_seq seq(words.begin(), words.end());
    std::uint32_t out[2];
    seq.generate(out, out + 2);
    return (static_cast<std::uint64_t>(out[1]) << 32) | out[0];
}

inline Rng make_rng(std::uint64_t master, std::initializer_list<std::uint64_t> path) {
    return Rng(derive_seed(master, path));
}

// Stream tags, kept distinct so e.g. particle 3 of the prior draw never shares
// a stream with particle 3 of a mutation.
namespace stream {
inline constexpr std::uint64_t kInit = 1;
inline constexpr std::uint64_t kMutate = 2;
inline constexpr std::uint64_t kResample = 3;
inline constexpr std::uint64_t kImportance = 4;
inline constexpr std::uint64_t kPcrb = 5;
inline constexpr std::uint64_t kTruth = 6;
inline constexpr std::uint64_t kObservation = 7;
inline constexpr std::uint64_t kModel = 8;
inline constexpr std::uint64_t kReplicate = 9;
}  // namespace stream

}  // namespace wsnloc
