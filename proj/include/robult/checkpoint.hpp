#pragma once

// Checkpoint layout (all integers u32 little-endian, reals IEEE-754 binary64 little-endian):
//
//   "RBLTCKPT"                      8-byte magic
//   version
//   M, d, task (0 classification, 1 regression), classes, unique_branches (0/1)
//   raw_dims[M]
//   tensor_count, then (rows, cols) per tensor
//   tensor values, in RobultModel::parameters() declaration order

#include <array>
#include <bit>
#include <cstdint>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>

#include "robult/model.hpp"

namespace robult {

inline constexpr std::array<char, 8> kCheckpointMagic{'R', 'B', 'L', 'T', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointVersionError : public std::runtime_error {
public:
    CheckpointVersionError(std::uint32_t found, std::uint32_t expected)
        : std::runtime_error("checkpoint version " + std::to_string(found) + " is not supported (expected version " +
                             std::to_string(expected) + ")"),
          found_(found),
          expected_(expected) {}
    std::uint32_t found() const { return found_; }
    std::uint32_t expected() const { return expected_; }

private:
    std::uint32_t found_, expected_;
};

namespace detail {

inline void put_u32(std::ostream& os, std::uint32_t v) {
    for (int b = 0; b < 4; ++b) os.put(static_cast<char>((v >> (8 * b)) & 0xffU));
}

inline void put_f64(std::ostream& os, double v) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    for (int b = 0; b < 8; ++b) os.put(static_cast<char>((bits >> (8 * b)) & 0xffU));
}

inline std::uint64_t get_bytes(std::istream& is, int n) {
    std::uint64_t v = 0;
    for (int b = 0; b < n; ++b) {
        const int c = is.get();
        if (c == std::char_traits<char>::eof()) throw std::runtime_error("checkpoint: truncated file");
        v |= static_cast<std::uint64_t>(static_cast<unsigned char>(c)) << (8 * b);
    }
    return v;
}

inline std::uint32_t get_u32(std::istream& is) { return static_cast<std::uint32_t>(get_bytes(is, 4)); }
inline double get_f64(std::istream& is) { return std::bit_cast<double>(get_bytes(is, 8)); }

}  // namespace detail

inline void save_checkpoint(std::ostream& os, const RobultModel& model, std::uint32_t version = kCheckpointVersion) {
    const ModelConfig& cfg = model.config();
    os.write(kCheckpointMagic.data(), kCheckpointMagic.size());
    detail::put_u32(os, version);
    detail::put_u32(os, static_cast<std::uint32_t>(cfg.modalities()));
    detail::put_u32(os, static_cast<std::uint32_t>(cfg.latent_dim));
    detail::put_u32(os, cfg.task == TaskKind::classification ? 0U : 1U);
    detail::put_u32(os, static_cast<std::uint32_t>(cfg.num_classes));
    detail::put_u32(os, cfg.unique_branches ? 1U : 0U);
    for (std::size_t d : cfg.raw_dims) detail::put_u32(os, static_cast<std::uint32_t>(d));
    const auto params = model.parameters();
    detail::put_u32(os, static_cast<std::uint32_t>(params.size()));
    for (const auto& p : params) {
        detail::put_u32(os, static_cast<std::uint32_t>(p.rows()));
        detail::put_u32(os, static_cast<std::uint32_t>(p.cols()));
    }
    for (const auto& p : params)
        for (double v : p.values()) detail::put_f64(os, v);
}

inline RobultModel load_checkpoint(std::istream& is) {
    std::array<char, 8> magic{};
    is.read(magic.data(), magic.size());
    if (!is || magic != kCheckpointMagic) throw std::runtime_error("checkpoint: bad magic");
    const std::uint32_t version = detail::get_u32(is);
    if (version != kCheckpointVersion) throw CheckpointVersionError(version, kCheckpointVersion);

    ModelConfig cfg;
    const std::uint32_t M = detail::get_u32(is);
    cfg.latent_dim = detail::get_u32(is);
    cfg.task = detail::get_u32(is) == 0 ? TaskKind::classification : TaskKind::regression;
    cfg.num_classes = detail::get_u32(is);
    cfg.unique_branches = detail::get_u32(is) != 0;
    for (std::uint32_t i = 0; i < M; ++i) cfg.raw_dims.push_back(detail::get_u32(is));

    RobultModel model(cfg, 0);
    auto params = model.parameters();
    if (detail::get_u32(is) != params.size()) throw std::runtime_error("checkpoint: tensor count mismatch");
    for (const auto& p : params) {
        const std::uint32_t r = detail::get_u32(is), c = detail::get_u32(is);
        if (r != p.rows() || c != p.cols()) {
            throw std::runtime_error("checkpoint: tensor shape [" + std::to_string(r) + "x" + std::to_string(c) +
                                     "] does not match model " + shape_string(p.shape()));
        }
    }
    for (auto& p : params)
        for (double& v : p.mutable_values()) v = detail::get_f64(is);
    return model;
}

}  // namespace robult
