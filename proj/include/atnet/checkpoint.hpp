#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>

#include "atnet/image.hpp"
#include "atnet/network.hpp"
#include "atnet/optimizer.hpp"

namespace atnet {

/// Raised on a bad magic, unsupported version, checksum failure or spec mismatch.
class CheckpointError : public IoError {
public:
    using IoError::IoError;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Binary container, all integers and floats little-endian:
///   "ATNETCKP" | u32 version | str spec descriptor | u64 step
///   | u32 n_meta, (str key, str value)*
///   | u32 n_params, (str name, u32 ndim, i32 dims[ndim], f32 values[])*
///   | u8 has_optimizer [f64 lr beta1 beta2 eps | u64 step | u64 rejected | (f64 m[], f64 v[]) per param]
///   | u32 crc32 of all preceding bytes
/// where str = u32 length + UTF-8 bytes.
struct Checkpoint {
    NetworkSpec spec;
    ParameterStore params;
    std::optional<OptimizerState> optimizer;
    std::uint64_t step = 0;
    std::map<std::string, std::string> meta;
};

std::string encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(const std::string& bytes);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);
/// As load_checkpoint, but rejects a checkpoint whose network differs from expected.
Checkpoint load_checkpoint(const std::filesystem::path& path, const NetworkSpec& expected);

}  // namespace atnet
