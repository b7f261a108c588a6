#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "svc/tensor.hpp"

namespace svc {

using Json = nlohmann::json;

// Ordered, named parameter set. Order is the canonical iteration order for
// the optimizer and the serialization layout.
class ParamStore {
 public:
  Tensor& add(const std::string& name, Tensor value);
  Tensor& get(const std::string& name);
  const Tensor& get(const std::string& name) const;
  bool has(const std::string& name) const;

  size_t size() const { return names_.size(); }
  const std::string& name(size_t i) const { return names_[i]; }
  Tensor& tensor(size_t i) { return values_[i]; }
  const Tensor& tensor(size_t i) const { return values_[i]; }

  int64_t total_values() const;

 private:
  std::vector<std::string> names_;
  std::vector<Tensor> values_;
};

// Trained parameters plus the architecture metadata needed to rebuild the
// module that owns them. Persisted as <stem>.json + <stem>.bin where the
// .bin is the little-endian float32 blob described by the sidecar.
struct ModelBundle {
  std::string kind;  // recognizer | acoustic | vocoder | speaker_encoder
  Json config = Json::object();
  ParamStore params;

  // Hash over kind, canonical config text, and parameter names/shapes.
  // Identical hashes mean the same architecture.
  std::string arch_hash() const;

  void save(const std::filesystem::path& stem) const;
  static ModelBundle load(const std::filesystem::path& stem);
};

// Hash of a whole parameter blob (values included); used for freeze checks
// and artifact provenance.
std::string param_content_hash(const ParamStore& params);

// Small file helpers shared by artifact writers.
std::string read_file_bytes(const std::filesystem::path& p);
void write_file_bytes(const std::filesystem::path& p, std::string_view bytes);
void write_json_file(const std::filesystem::path& p, const Json& j);
Json read_json_file(const std::filesystem::path& p);
std::string file_content_hash(const std::filesystem::path& p);

}  // namespace svc
