#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "nlmr/nlm/parameters.hpp"

namespace nlmr::nlm {

/// One named tensor as stored on disk: dims are [rows, cols] (rank 2) and the
/// payload is row-major. Float tensors use `values`; 16-bit tensors use `ints`
/// plus one scale and shift per column.
struct TensorRecord {
  enum class Kind : std::uint8_t { kFloat32 = 0, kInt16 = 1 };

  std::string name;
  Kind kind = Kind::kFloat32;
  std::vector<std::uint64_t> dims;
  std::vector<float> values;
  std::vector<std::int16_t> ints;
  std::vector<double> scales;
  std::vector<double> shifts;
};

// Binary container: magic "NLMRCKPT", uint32 version, uint32 header count and
// length-prefixed key/value strings, uint32 tensor count, then tensor records.
// All integers and floats little-endian.
struct CheckpointFile {
  std::map<std::string, std::string> header;
  std::vector<TensorRecord> tensors;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

void WriteCheckpointFile(const std::filesystem::path& path, const CheckpointFile& file);
/// Throws DataError on a bad magic, unknown version or truncated file.
CheckpointFile ReadCheckpointFile(const std::filesystem::path& path);

/// Matrix <-> row-major float record.
TensorRecord ToRecord(const std::string& name, const Parameters::Matrix& m);
Parameters::Matrix FromRecord(const TensorRecord& record);

void SaveParameters(const std::filesystem::path& path, const Parameters& params);
/// Throws DataError when the file holds a quantized model or shapes disagree with its config.
Parameters LoadParameters(const std::filesystem::path& path);
/// True when the checkpoint's header marks it as quantized.
bool IsQuantizedCheckpoint(const std::filesystem::path& path);

}  // namespace nlmr::nlm
