#pragma once

// Named f32 tensor sets and the LSCP checkpoint format.
//
// LSCP layout (all integers little-endian):
//   "LSCP" | u32 version = 1 | u64 header length H | H bytes of JSON | payload
// The JSON header is
//   {"meta": {...}, "tensors": {name: {"dtype": "f32", "offset": n, "shape": [...]}}}
// with byte offsets relative to the payload start, ascending in name order.
// The payload is raw little-endian IEEE-754 f32 in row-major order.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace wsi {

using Shape = std::vector<std::size_t>;

std::size_t element_count(const Shape& shape);
std::string shape_to_string(const Shape& shape);

struct Tensor {
  Shape shape;
  std::vector<float> data;

  Tensor() = default;
  Tensor(Shape shape, std::vector<float> data);

  /// Zero tensor of the given shape.
  static Tensor zeros(Shape shape);

  std::size_t size() const { return data.size(); }
};

/// Compares shape and the raw bit patterns of the data (NaN payloads included).
bool bit_equal(const Tensor& a, const Tensor& b);

/// Which parameter group an operation touches. Group membership is decided by
/// the name prefix: "encoder." or "head.".
enum class Subset { all, encoder, head };

Subset parse_subset(std::string_view text);
std::string_view to_string(Subset subset);
bool selects(Subset subset, std::string_view tensor_name);

inline constexpr std::string_view kEncoderPrefix = "encoder.";
inline constexpr std::string_view kHeadPrefix = "head.";

class ParameterSet {
 public:
  using TensorMap = std::map<std::string, Tensor, std::less<>>;
  using Meta = std::map<std::string, std::string, std::less<>>;

  ParameterSet() = default;

  /// Adds a tensor. Throws argument error on an empty or duplicate name, a
  /// zero-sized dimension, or a data length that disagrees with the shape.
  void insert(std::string name, Tensor tensor);
  /// Replaces an existing tensor with one of the same shape.
  void replace(std::string_view name, Tensor tensor);

  const Tensor& at(std::string_view name) const;
  bool contains(std::string_view name) const;

  const TensorMap& tensors() const { return tensors_; }
  std::size_t num_tensors() const { return tensors_.size(); }
  std::size_t num_elements() const;
  bool empty() const { return tensors_.empty(); }

  Meta& meta() { return meta_; }
  const Meta& meta() const { return meta_; }

 private:
  TensorMap tensors_;
  Meta meta_;
};

/// Bit-exact equality of tensors and metadata.
bool bit_equal(const ParameterSet& a, const ParameterSet& b);
/// Bit-exact equality of tensors only.
bool same_tensors(const ParameterSet& a, const ParameterSet& b);

/// Succeeds iff both sets have the same names and per-name shapes.
/// Throws missing-name (listing the symmetric difference) or shape-mismatch.
void validate_compatibility(const ParameterSet& a, const ParameterSet& b);

/// `full` with the tensors selected by `subset` taken from `partial`.
ParameterSet apply_subset_filter(const ParameterSet& full, const ParameterSet& partial,
                                 Subset subset);

/// Selected tensors concatenated in lexicographic name order.
std::vector<float> flatten(const ParameterSet& ps, Subset subset);

std::string serialize_checkpoint(const ParameterSet& ps);
ParameterSet parse_checkpoint(std::span<const std::byte> bytes);
ParameterSet parse_checkpoint(std::string_view bytes);

void save_checkpoint(const ParameterSet& ps, const std::filesystem::path& path);
ParameterSet load_checkpoint(const std::filesystem::path& path);

/// 16 hex digits of FNV-1a over the serialized tensors (metadata excluded).
std::string content_hash(const ParameterSet& ps);

}  // namespace wsi
