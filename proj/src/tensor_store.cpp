#include "wsi/tensor_store.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <functional>
#include <numeric>
#include <sstream>

#include "json.hpp"
#include "wsi/error.hpp"

namespace wsi {

using json = nlohmann::json;

namespace {

constexpr std::string_view kMagic = "LSCP";
constexpr std::uint32_t kVersion = 1;
constexpr std::size_t kPreambleSize = 4 + 4 + 8;

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

std::uint64_t get_le(std::span<const std::byte> bytes, std::size_t width) {
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < width; ++i)
    v |= static_cast<std::uint64_t>(std::to_integer<std::uint8_t>(bytes[i])) << (8 * i);
  return v;
}

json header_for(const ParameterSet& ps, bool with_meta) {
  json tensors = json::object();
  std::uint64_t offset = 0;
  for (const auto& [name, t] : ps.tensors()) {
    tensors[name] = {{"dtype", "f32"}, {"shape", t.shape}, {"offset", offset}};
    offset += 4 * t.size();
  }
  json meta = json::object();
  if (with_meta)
    for (const auto& [k, v] : ps.meta()) meta[k] = v;
  return {{"tensors", std::move(tensors)}, {"meta", std::move(meta)}};
}

std::string serialize(const ParameterSet& ps, bool with_meta) {
  const std::string header = header_for(ps, with_meta).dump();
  std::string out;
  out.reserve(kPreambleSize + header.size() + 4 * ps.num_elements());
  out.append(kMagic);
  put_u32(out, kVersion);
  put_u64(out, header.size());
  out.append(header);
  for (const auto& [name, t] : ps.tensors())
    for (float f : t.data) put_u32(out, std::bit_cast<std::uint32_t>(f));
  return out;
}

}  // namespace

std::size_t element_count(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_to_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

Tensor::Tensor(Shape s, std::vector<float> d) : shape(std::move(s)), data(std::move(d)) {}

Tensor Tensor::zeros(Shape shape) {
  const std::size_t n = element_count(shape);
  return Tensor(std::move(shape), std::vector<float>(n, 0.0f));
}

bool bit_equal(const Tensor& a, const Tensor& b) {
  return a.shape == b.shape && a.data.size() == b.data.size() &&
         std::memcmp(a.data.data(), b.data.data(), a.data.size() * sizeof(float)) == 0;
}

Subset parse_subset(std::string_view text) {
  if (text == "all") return Subset::all;
  if (text == "encoder") return Subset::encoder;
  if (text == "head") return Subset::head;
  throw Error(Errc::argument, "unknown subset '" + std::string(text) + "'");
}

std::string_view to_string(Subset subset) {
  switch (subset) {
    case Subset::all: return "all";
    case Subset::encoder: return "encoder";
    case Subset::head: return "head";
  }
  return "all";
}

bool selects(Subset subset, std::string_view tensor_name) {
  switch (subset) {
    case Subset::all: return true;
    case Subset::encoder: return tensor_name.starts_with(kEncoderPrefix);
    case Subset::head: return tensor_name.starts_with(kHeadPrefix);
  }
  return false;
}

void ParameterSet::insert(std::string name, Tensor tensor) {
  if (name.empty()) throw Error(Errc::argument, "tensor name must be non-empty");
  if (std::find(tensor.shape.begin(), tensor.shape.end(), 0u) != tensor.shape.end())
    throw Error(Errc::argument, "tensor '" + name + "' has a zero-sized dimension");
  if (element_count(tensor.shape) != tensor.data.size())
    throw Error(Errc::argument, "tensor '" + name + "' has " + std::to_string(tensor.data.size()) +
                                    " values for shape " + shape_to_string(tensor.shape));
  auto [it, inserted] = tensors_.try_emplace(std::move(name), std::move(tensor));
  if (!inserted) throw Error(Errc::argument, "duplicate tensor name '" + it->first + "'");
}

void ParameterSet::replace(std::string_view name, Tensor tensor) {
  auto it = tensors_.find(name);
  if (it == tensors_.end())
    throw Error(Errc::missing_name, "no tensor named '" + std::string(name) + "'");
  if (it->second.shape != tensor.shape || tensor.data.size() != it->second.data.size())
    throw Error(Errc::shape_mismatch, "replacement for '" + it->first + "' has shape " +
                                          shape_to_string(tensor.shape) + ", expected " +
                                          shape_to_string(it->second.shape));
  it->second = std::move(tensor);
}

const Tensor& ParameterSet::at(std::string_view name) const {
  auto it = tensors_.find(name);
  if (it == tensors_.end())
    throw Error(Errc::missing_name, "no tensor named '" + std::string(name) + "'");
  return it->second;
}

bool ParameterSet::contains(std::string_view name) const { return tensors_.contains(name); }

std::size_t ParameterSet::num_elements() const {
  std::size_t n = 0;
  for (const auto& [_, t] : tensors_) n += t.size();
  return n;
}

bool same_tensors(const ParameterSet& a, const ParameterSet& b) {
  return std::equal(a.tensors().begin(), a.tensors().end(), b.tensors().begin(),
                    b.tensors().end(), [](const auto& x, const auto& y) {
                      return x.first == y.first && bit_equal(x.second, y.second);
                    });
}

bool bit_equal(const ParameterSet& a, const ParameterSet& b) {
  return a.meta() == b.meta() && same_tensors(a, b);
}

void validate_compatibility(const ParameterSet& a, const ParameterSet& b) {
  std::vector<std::string> missing;
  for (const auto& [name, _] : a.tensors())
    if (!b.contains(name)) missing.push_back(name);
  for (const auto& [name, _] : b.tensors())
    if (!a.contains(name)) missing.push_back(name);
  std::sort(missing.begin(), missing.end());
  if (!missing.empty()) {
    std::string list;
    for (const auto& n : missing) list += (list.empty() ? "" : ", ") + n;
    throw Error(Errc::missing_name, "tensor names differ: " + list);
  }
  for (const auto& [name, ta] : a.tensors()) {
    const Tensor& tb = b.at(name);
    if (ta.shape != tb.shape)
      throw Error(Errc::shape_mismatch, "tensor '" + name + "' has shape " +
                                            shape_to_string(ta.shape) + " vs " +
                                            shape_to_string(tb.shape));
  }
}

ParameterSet apply_subset_filter(const ParameterSet& full, const ParameterSet& partial,
                                 Subset subset) {
  validate_compatibility(full, partial);
  ParameterSet out = full;
  for (const auto& [name, t] : partial.tensors())
    if (selects(subset, name)) out.replace(name, t);
  if (subset == Subset::all) out.meta() = partial.meta();
  return out;
}

std::vector<float> flatten(const ParameterSet& ps, Subset subset) {
  std::vector<float> out;
  for (const auto& [name, t] : ps.tensors())
    if (selects(subset, name)) out.insert(out.end(), t.data.begin(), t.data.end());
  return out;
}

std::string serialize_checkpoint(const ParameterSet& ps) { return serialize(ps, true); }

ParameterSet parse_checkpoint(std::string_view bytes) {
  return parse_checkpoint(std::as_bytes(std::span(bytes.data(), bytes.size())));
}

ParameterSet parse_checkpoint(std::span<const std::byte> bytes) {
  if (bytes.size() < kPreambleSize ||
      std::memcmp(bytes.data(), kMagic.data(), kMagic.size()) != 0)
    throw Error(Errc::format, "missing LSCP magic");
  const auto version = get_le(bytes.subspan(4), 4);
  if (version != kVersion)
    throw Error(Errc::format, "unsupported LSCP version " + std::to_string(version));
  const std::uint64_t header_len = get_le(bytes.subspan(8), 8);
  if (header_len > bytes.size() - kPreambleSize)
    throw Error(Errc::corruption, "header length exceeds file size");

  const auto header_bytes = bytes.subspan(kPreambleSize, header_len);
  const auto payload = bytes.subspan(kPreambleSize + header_len);
  json header;
  try {
    header = json::parse(reinterpret_cast<const char*>(header_bytes.data()),
                         reinterpret_cast<const char*>(header_bytes.data()) + header_bytes.size());
  } catch (const json::exception& e) {
    throw Error(Errc::format, std::string("header is not valid JSON: ") + e.what());
  }
  if (!header.is_object() || !header.contains("tensors") || !header["tensors"].is_object())
    throw Error(Errc::format, "header lacks a 'tensors' object");

  struct Extent {
    std::uint64_t begin, end;
    std::string name;
  };
  std::vector<Extent> extents;
  ParameterSet ps;
  try {
    for (const auto& [name, info] : header["tensors"].items()) {
      const std::string dtype = info.at("dtype").get<std::string>();
      if (dtype != "f32")
        throw Error(Errc::unsupported_dtype, "tensor '" + name + "' has dtype " + dtype);
      Shape shape = info.at("shape").get<Shape>();
      const std::uint64_t offset = info.at("offset").get<std::uint64_t>();
      const std::uint64_t n = element_count(shape);
      if (offset % 4 != 0 || offset > payload.size() || 4 * n > payload.size() - offset)
        throw Error(Errc::corruption, "tensor '" + name + "' runs past the payload");
      std::vector<float> data(n);
      for (std::uint64_t i = 0; i < n; ++i)
        data[i] = std::bit_cast<float>(
            static_cast<std::uint32_t>(get_le(payload.subspan(offset + 4 * i), 4)));
      extents.push_back({offset, offset + 4 * n, name});
      ps.insert(name, Tensor(std::move(shape), std::move(data)));
    }
    if (header.contains("meta")) {
      for (const auto& [k, v] : header["meta"].items())
        ps.meta()[k] = v.is_string() ? v.get<std::string>() : v.dump();
    }
  } catch (const json::exception& e) {
    throw Error(Errc::format, std::string("malformed tensor entry: ") + e.what());
  } catch (const Error& e) {
    if (e.code() == Errc::argument) throw Error(Errc::format, e.what());
    throw;
  }

  std::sort(extents.begin(), extents.end(),
            [](const Extent& a, const Extent& b) { return a.begin < b.begin; });
  std::uint64_t covered = 0;
  for (const auto& e : extents) {
    if (e.begin < covered)
      throw Error(Errc::corruption, "tensor '" + e.name + "' overlaps a preceding tensor");
    covered = e.end;
  }
  if (covered != payload.size())
    throw Error(Errc::corruption, "payload has " + std::to_string(payload.size()) +
                                      " bytes, header describes " + std::to_string(covered));
  return ps;
}

void save_checkpoint(const ParameterSet& ps, const std::filesystem::path& path) {
  const std::string bytes = serialize_checkpoint(ps);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::io, "cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(Errc::io, "failed writing " + path.string());
}

ParameterSet load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::io, "cannot open " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_checkpoint(std::string_view(bytes));
}

std::string content_hash(const ParameterSet& ps) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : serialize(ps, false)) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  std::ostringstream os;
  os << std::hex;
  os.width(16);
  os.fill('0');
  os << h;
  return os.str();
}

}  // namespace wsi
