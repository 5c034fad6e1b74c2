#include "armflow/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>

namespace armflow::nn {

namespace {

struct Entry {
  std::string name;
  Shape shape;
  const Mat* data;
  bool aux;
};

void write_all(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  out.write(bytes.data(), std::streamsize(bytes.size()));
  if (!out) throw IoError("short write to " + path);
}

}  // namespace

void save_checkpoint(const std::string& index_path, const std::string& blob_path,
                     const ParamStore& params, const std::map<std::string, Mat>& aux,
                     const nlohmann::ordered_json& meta) {
  std::vector<Entry> entries;
  for (const auto& [name, t] : params.raw())
    entries.push_back({name, t.shape(), &t.value(), false});
  for (const auto& [name, m] : aux)
    entries.push_back({"__aux/" + name, Shape{int(m.rows()), int(m.cols())}, &m, true});

  nlohmann::ordered_json index;
  index["format"] = "armflow-checkpoint-v1";
  nlohmann::ordered_json jparams = nlohmann::ordered_json::object();
  std::string blob;
  uint64_t offset = 0;
  for (const auto& e : entries) {
    const uint64_t len = uint64_t(e.data->size()) * sizeof(Scalar);
    nlohmann::ordered_json je;
    je["dtype"] = "f64";
    je["shape"] = e.shape;
    je["offset"] = offset;
    je["length"] = len;
    jparams[e.name] = je;
    blob.append(reinterpret_cast<const char*>(e.data->data()), len);
    offset += len;
  }
  index["params"] = jparams;
  nlohmann::ordered_json jfrozen = nlohmann::ordered_json::array();
  for (const auto& f : params.frozen_paths()) jfrozen.push_back(f);
  index["frozen"] = jfrozen;
  index["meta"] = meta.is_null() ? nlohmann::ordered_json::object() : meta;

  write_all(index_path, index.dump(2) + "\n");
  write_all(blob_path, blob);
}

Checkpoint load_checkpoint(const std::string& index_path, const std::string& blob_path) {
  std::ifstream in(index_path);
  if (!in) throw CheckpointError("cannot open " + index_path);
  nlohmann::ordered_json index;
  try {
    in >> index;
  } catch (const std::exception& e) {
    throw CheckpointError(std::string("bad index json: ") + e.what());
  }
  if (index.value("format", "") != "armflow-checkpoint-v1")
    throw CheckpointError("unknown checkpoint format");

  std::ifstream blob(blob_path, std::ios::binary);
  if (!blob) throw CheckpointError("cannot open " + blob_path);
  std::string bytes((std::istreambuf_iterator<char>(blob)), std::istreambuf_iterator<char>());

  Checkpoint ck;
  for (auto& [name, je] : index["params"].items()) {
    Shape shape = je["shape"].get<Shape>();
    const uint64_t offset = je["offset"].get<uint64_t>();
    const uint64_t length = je["length"].get<uint64_t>();
    if (je.value("dtype", "") != "f64") throw CheckpointError("unsupported dtype for " + name);
    if (offset + length > bytes.size()) throw CheckpointError("blob out of range for " + name);
    const int64_t count = int64_t(length / sizeof(Scalar));
    if (count != shape_numel(shape)) throw CheckpointError("shape/length mismatch for " + name);
    Mat m(count ? std::max<int64_t>(1, count / (shape.empty() ? 1 : shape.back())) : 0,
          shape.empty() ? 1 : shape.back());
    std::memcpy(m.data(), bytes.data() + offset, length);
    if (name.rfind("__aux/", 0) == 0) {
      ck.aux[name.substr(6)] = std::move(m);
    } else {
      ck.params.declare(name, shape, [&](Mat& dst) { dst = m; });
    }
  }
  for (const auto& f : index["frozen"]) ck.params.mark_frozen(f.get<std::string>());
  ck.meta = index["meta"];
  return ck;
}

void save_checkpoint_dir(const std::string& dir, const std::string& stem,
                         const ParamStore& params, const std::map<std::string, Mat>& aux,
                         const nlohmann::ordered_json& meta) {
  std::filesystem::create_directories(dir);
  save_checkpoint(dir + "/" + stem + ".index.json", dir + "/" + stem + ".bin", params, aux, meta);
}

Checkpoint load_checkpoint_dir(const std::string& dir, const std::string& stem) {
  return load_checkpoint(dir + "/" + stem + ".index.json", dir + "/" + stem + ".bin");
}

}  // namespace armflow::nn
