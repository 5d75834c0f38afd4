#pragma once

#include <fstream>
#include <map>

#include <json.hpp>

#include "echodet/nn/module.hpp"

namespace echodet {

// Flat checkpoint: dotted parameter names -> float32 arrays plus a JSON
// manifest (shape table, version string, free-form metadata).
//
//   bytes 0..7   magic "EDETCKPT"
//   bytes 8..15  little-endian uint64 manifest length
//   manifest     JSON {"version", "meta": {...}, "tensors": [{name, shape, count}]}
//   payload      concatenated float32 data in manifest order
struct Checkpoint {
  static constexpr const char* kMagic = "EDETCKPT";
  static constexpr const char* kVersion = "echodet-ckpt-1";

  std::map<std::string, Tensor<float>> tensors;
  std::map<std::string, std::string> meta;

  void save(const std::string& path) const {
    nlohmann::json manifest;
    manifest["version"] = kVersion;
    manifest["meta"] = meta;
    auto& tl = manifest["tensors"] = nlohmann::json::array();
    for (const auto& [name, t] : tensors) {
      nlohmann::json e;
      e["name"] = name;
      e["shape"] = t.shape();
      e["count"] = t.numel();
      tl.push_back(e);
    }
    std::string mj = manifest.dump();
    std::ofstream f(path, std::ios::binary);
    ECHODET_CHECK(f.good(), "cannot write checkpoint " << path);
    f.write(kMagic, 8);
    uint64_t len = mj.size();
    f.write(reinterpret_cast<const char*>(&len), 8);
    f.write(mj.data(), static_cast<std::streamsize>(mj.size()));
    for (const auto& [name, t] : tensors)
      f.write(reinterpret_cast<const char*>(t.data()),
              static_cast<std::streamsize>(sizeof(float) * static_cast<size_t>(t.numel())));
    ECHODET_CHECK(f.good(), "short write on checkpoint " << path);
  }

  static Checkpoint load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    ECHODET_CHECK(f.good(), "cannot open checkpoint " << path);
    char magic[9] = {0};
    f.read(magic, 8);
    ECHODET_CHECK(std::string(magic) == kMagic, path << " is not a checkpoint file");
    uint64_t len = 0;
    f.read(reinterpret_cast<char*>(&len), 8);
    std::string mj(len, '\0');
    f.read(mj.data(), static_cast<std::streamsize>(len));
    nlohmann::json manifest = nlohmann::json::parse(mj);
    ECHODET_CHECK(manifest.at("version").get<std::string>() == kVersion,
                  "unsupported checkpoint version in " << path);
    Checkpoint ck;
    nlohmann::json meta_obj = manifest.value("meta", nlohmann::json::object());
    for (auto& [k, v] : meta_obj.items()) ck.meta[k] = v.get<std::string>();
    for (const auto& e : manifest.at("tensors")) {
      Shape shape = e.at("shape").get<Shape>();
      Tensor<float> t = Tensor<float>::empty(shape);
      f.read(reinterpret_cast<char*>(t.data()),
             static_cast<std::streamsize>(sizeof(float) * static_cast<size_t>(t.numel())));
      ECHODET_CHECK(f.good(), "truncated checkpoint " << path);
      ck.tensors[e.at("name").get<std::string>()] = std::move(t);
    }
    return ck;
  }

  template <class T>
  void put_params(const NamedParams<T>& params, const std::string& prefix = "") {
    for (const auto& [name, p] : params.items) {
      if constexpr (std::is_same_v<T, float>)
        tensors[prefix + name] = p->value().clone();
      else
        tensors[prefix + name] = p->value().template cast<float>();
    }
  }

  // strict = every parameter must be present (loading a training checkpoint);
  // with strict = false matching names load and the rest keep their init
  // (loading pretrained backbone weights)
  template <class T>
  int get_params(NamedParams<T>& params, const std::string& prefix = "",
                 bool strict = true) const {
    int loaded = 0;
    for (auto& [name, p] : params.items) {
      auto it = tensors.find(prefix + name);
      if (it == tensors.end()) {
        ECHODET_CHECK(!strict, "checkpoint is missing parameter " << prefix + name);
        continue;
      }
      ECHODET_CHECK(it->second.shape() == p->value().shape(),
                    "checkpoint shape mismatch for " << name << ": file "
                                                     << shape_str(it->second.shape()) << " vs model "
                                                     << shape_str(p->value().shape()));
      if constexpr (std::is_same_v<T, float>)
        p->value() = it->second.clone();
      else
        p->value() = it->second.template cast<T>();
      ++loaded;
    }
    return loaded;
  }
};

}  // namespace echodet
