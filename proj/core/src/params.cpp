#include "svc/params.hpp"

#include <cstring>
#include <fstream>

#include "svc/common.hpp"
#include "svc/hash.hpp"

namespace svc {

Tensor& ParamStore::add(const std::string& name, Tensor value) {
  require(!has(name), "duplicate_param", "parameter already registered: " + name);
  names_.push_back(name);
  values_.push_back(std::move(value));
  return values_.back();
}

Tensor& ParamStore::get(const std::string& name) {
  for (size_t i = 0; i < names_.size(); ++i)
    if (names_[i] == name) return values_[i];
  fail("missing_param", "no such parameter: " + name);
}

const Tensor& ParamStore::get(const std::string& name) const {
  for (size_t i = 0; i < names_.size(); ++i)
    if (names_[i] == name) return values_[i];
  fail("missing_param", "no such parameter: " + name);
}

bool ParamStore::has(const std::string& name) const {
  for (const auto& n : names_)
    if (n == name) return true;
  return false;
}

int64_t ParamStore::total_values() const {
  int64_t n = 0;
  for (const auto& t : values_) n += t.numel();
  return n;
}

std::string ModelBundle::arch_hash() const {
  std::string desc = kind + "|" + config.dump();
  for (size_t i = 0; i < params.size(); ++i) {
    desc += "|" + params.name(i) + params.tensor(i).shape_str();
  }
  return content_hash(desc);
}

void ModelBundle::save(const std::filesystem::path& stem) const {
  std::filesystem::create_directories(stem.parent_path());
  Json meta;
  meta["kind"] = kind;
  meta["config"] = config;
  meta["arch_hash"] = arch_hash();
  Json plist = Json::array();
  int64_t offset = 0;
  for (size_t i = 0; i < params.size(); ++i) {
    const Tensor& t = params.tensor(i);
    plist.push_back({{"name", params.name(i)}, {"shape", t.shape}, {"offset", offset}});
    offset += t.numel();
  }
  meta["params"] = plist;
  meta["total_values"] = offset;

  std::string blob;
  blob.reserve(static_cast<size_t>(offset) * sizeof(float));
  for (size_t i = 0; i < params.size(); ++i) {
    const Tensor& t = params.tensor(i);
    const char* bytes = reinterpret_cast<const char*>(t.data.data());
    blob.append(bytes, t.data.size() * sizeof(float));
  }
  meta["blob_hash"] = content_hash(blob);

  write_json_file(stem.string() + ".json", meta);
  write_file_bytes(stem.string() + ".bin", blob);
}

ModelBundle ModelBundle::load(const std::filesystem::path& stem) {
  Json meta = read_json_file(stem.string() + ".json");
  ModelBundle b;
  b.kind = meta.at("kind").get<std::string>();
  b.config = meta.at("config");
  const std::string blob = read_file_bytes(stem.string() + ".bin");
  require(content_hash(blob) == meta.at("blob_hash").get<std::string>(), "corrupt_bundle",
          "parameter blob hash mismatch: " + stem.string());
  for (const auto& p : meta.at("params")) {
    std::vector<int> shape = p.at("shape").get<std::vector<int>>();
    const int64_t offset = p.at("offset").get<int64_t>();
    Tensor t(shape);
    require((offset + t.numel()) * static_cast<int64_t>(sizeof(float)) <=
                static_cast<int64_t>(blob.size()),
            "corrupt_bundle", "parameter extends past blob end");
    std::memcpy(t.data.data(), blob.data() + offset * sizeof(float),
                t.data.size() * sizeof(float));
    b.params.add(p.at("name").get<std::string>(), std::move(t));
  }
  return b;
}

std::string param_content_hash(const ParamStore& params) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (size_t i = 0; i < params.size(); ++i) {
    h = fnv1a64(params.name(i), h);
    const Tensor& t = params.tensor(i);
    h = fnv1a64({reinterpret_cast<const char*>(t.data.data()), t.data.size() * sizeof(float)}, h);
  }
  return hex64(h);
}

std::string read_file_bytes(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  require(f.good(), "io_error", "cannot open for read: " + p.string());
  std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return bytes;
}

void write_file_bytes(const std::filesystem::path& p, std::string_view bytes) {
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream f(p, std::ios::binary | std::ios::trunc);
  require(f.good(), "io_error", "cannot open for write: " + p.string());
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  require(f.good(), "io_error", "write failed: " + p.string());
}

void write_json_file(const std::filesystem::path& p, const Json& j) {
  write_file_bytes(p, j.dump(2) + "\n");
}

Json read_json_file(const std::filesystem::path& p) {
  return Json::parse(read_file_bytes(p));
}

std::string file_content_hash(const std::filesystem::path& p) {
  return content_hash(read_file_bytes(p));
}

}  // namespace svc
