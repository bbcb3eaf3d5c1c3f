#include "moodgan/reprnet.hpp"

#include <filesystem>
#include <fstream>

#include "json.hpp"

namespace moodgan::repr {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

constexpr int kSchemaVersion = 1;

const char* kind_name(ModelKind kind) { return kind == ModelKind::kRepr ? "repr" : "av"; }

fs::path weights_path(const std::string& dir) { return fs::path(dir) / "weights.bin"; }

}  // namespace

void write_metadata(const std::string& dir, ModelKind kind, int image_size, const BackboneSpec& spec) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create " + dir + ": " + ec.message());
  json meta;
  meta["schema_version"] = kSchemaVersion;
  meta["kind"] = kind_name(kind);
  meta["image_size"] = image_size;
  meta["classes"] = json::array();
  for (auto name : kClassNames) meta["classes"].push_back(std::string(name));
  meta["backbone"] = {{"base_channels", spec.base_channels},
                      {"max_channels", spec.max_channels},
                      {"stages", spec.stages},
                      {"blocks_per_stage", spec.blocks_per_stage},
                      {"stem_kernel", spec.stem_kernel}};
  std::ofstream out(fs::path(dir) / "metadata.json");
  if (!out) throw std::runtime_error("cannot write metadata in " + dir);
  out << meta.dump(2) << '\n';
}

ModelMetadata read_metadata(const std::string& dir) {
  const fs::path path = fs::path(dir) / "metadata.json";
  std::ifstream in(path);
  if (!in) throw std::runtime_error("checkpoint not found: " + path.string());
  json meta;
  try {
    meta = json::parse(in);
    if (meta.at("schema_version").get<int>() != kSchemaVersion) {
      throw std::runtime_error("unsupported checkpoint schema in " + path.string());
    }
    ModelMetadata out;
    const auto kind = meta.at("kind").get<std::string>();
    if (kind == "repr") {
      out.kind = ModelKind::kRepr;
    } else if (kind == "av") {
      out.kind = ModelKind::kAv;
    } else {
      throw std::runtime_error("checkpoint " + dir + " has kind '" + kind + "'");
    }
    out.image_size = meta.at("image_size").get<int>();
    const auto& classes = meta.at("classes");
    if (classes.size() != kClassNames.size()) throw std::runtime_error("class list mismatch in " + path.string());
    for (std::size_t i = 0; i < kClassNames.size(); ++i) {
      if (classes[i].get<std::string>() != kClassNames[i]) {
        throw std::runtime_error("class list mismatch in " + path.string());
      }
    }
    const auto& b = meta.at("backbone");
    out.spec = {b.at("base_channels").get<int>(), b.at("max_channels").get<int>(), b.at("stages").get<int>(),
                b.at("blocks_per_stage").get<int>(), b.at("stem_kernel").get<int>()};
    return out;
  } catch (const json::exception& e) {
    throw std::runtime_error("malformed metadata in " + path.string() + ": " + e.what());
  }
}

void save_checkpoint(const ReprModel<float>& model, const std::string& dir) {
  write_metadata(dir, ModelKind::kRepr, model.image_size(), model.spec());
  nn::save_parameters(model.parameters(), weights_path(dir).string());
}

void save_checkpoint(const AvEstimator<float>& model, const std::string& dir) {
  write_metadata(dir, ModelKind::kAv, model.image_size(), model.spec());
  nn::save_parameters(model.parameters(), weights_path(dir).string());
}

ReprModel<float> load_repr(const std::string& dir) {
  const auto meta = read_metadata(dir);
  if (meta.kind != ModelKind::kRepr) throw std::runtime_error("checkpoint " + dir + " is not a repr model");
  ReprModel<float> model(meta.image_size, meta.spec, 0);
  nn::load_parameters(model.parameters(), weights_path(dir).string());
  return model;
}

AvEstimator<float> load_av(const std::string& dir) {
  const auto meta = read_metadata(dir);
  if (meta.kind != ModelKind::kAv) throw std::runtime_error("checkpoint " + dir + " is not an av estimator");
  AvEstimator<float> model(meta.image_size, meta.spec, 0);
  nn::load_parameters(model.parameters(), weights_path(dir).string());
  return model;
}

AnnotationResult annotate_corpus(const ReprModel<float>& model, const std::string& manifest_in,
                                 const std::string& manifest_out, const Preprocessor& preprocess) {
  std::ifstream in(manifest_in);
  if (!in) throw std::runtime_error("cannot open manifest " + manifest_in);
  const fs::path root = fs::path(manifest_in).parent_path();
  const int size = model.image_size();

  struct Row {
    std::string raw;
    std::optional<json> parsed;
    std::optional<Image> image;
  };
  std::vector<Row> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    Row row{line, std::nullopt, std::nullopt};
    try {
      auto parsed = json::parse(line);
      if (parsed.is_object()) row.parsed = std::move(parsed);
    } catch (const json::parse_error&) {
    }
    if (row.parsed && row.parsed->contains("path") && (*row.parsed)["path"].is_string()) {
      try {
        Image image = preprocess(read_image((root / (*row.parsed)["path"].get<std::string>()).string()), size);
        if (image.height == size && image.width == size) {
          image.pixels = image.pixels.cwiseMax(0.0f).cwiseMin(1.0f);
          row.image = std::move(image);
        }
      } catch (const std::exception&) {
      }
    }
    rows.push_back(std::move(row));
  }

  constexpr std::size_t kBatch = 64;
  std::vector<std::size_t> pending;
  auto flush = [&] {
    if (pending.empty()) return;
    std::vector<const Image*> images;
    for (auto i : pending) images.push_back(&*rows[i].image);
    const Eigen::MatrixXf moods = embed(model, stack(images));
    for (std::size_t k = 0; k < pending.size(); ++k) {
      const auto col = moods.col(static_cast<Eigen::Index>(k));
      (*rows[pending[k]].parsed)["mood"] = json::array({static_cast<double>(col[0]), static_cast<double>(col[1]),
                                                        static_cast<double>(col[2])});
    }
    pending.clear();
  };
  AnnotationResult result;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].image) {
      pending.push_back(i);
      if (pending.size() == kBatch) flush();
    } else {
      ++result.unreadable;
      if (rows[i].parsed) (*rows[i].parsed)["mood"] = nullptr;
    }
  }
  flush();

  if (!fs::path(manifest_out).parent_path().empty()) fs::create_directories(fs::path(manifest_out).parent_path());
  std::ofstream out(manifest_out, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + manifest_out);
  for (const auto& row : rows) {
    out << (row.parsed ? row.parsed->dump() : row.raw) << '\n';
    ++result.rows;
  }
  if (!out) throw std::runtime_error("failed writing " + manifest_out);
  return result;
}

}  // namespace moodgan::repr
