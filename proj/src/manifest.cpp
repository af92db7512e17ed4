#include "tpwng/manifest.hpp"

#include "tpwng/errors.hpp"
#include "tpwng/feature_io.hpp"
#include "tpwng/random.hpp"

#include <json.hpp>

#include <fstream>
#include <set>

namespace tpwng::data {

using nlohmann::json;

void validate(const DatasetManifest& m) {
  if (m.dim < 1) throw ContractError("manifest: dim must be >= 1");
  if (m.num_classes < 2) throw ContractError("manifest: num_classes must be >= 2");
  if (static_cast<int>(m.classes.size()) != m.num_classes) {
    throw ContractError("manifest: classes[] has " + std::to_string(m.classes.size()) +
                        " names for num_classes " + std::to_string(m.num_classes));
  }
  std::set<std::string> names(m.classes.begin(), m.classes.end());
  if (names.size() != m.classes.size()) throw ContractError("manifest: duplicate class names");

  std::set<std::string> paths;
  for (const auto& v : m.videos) {
    if (v.label != 0 && v.label != 1) throw ContractError(v.path + ": label must be 0 or 1");
    if (v.class_index < 1 || v.class_index > m.num_classes) {
      throw ContractError(v.path + ": class_index out of [1, num_classes]");
    }
    if (v.label == 0 && v.class_index != m.normal_index()) {
      throw ContractError(v.path + ": normal video must use the normal class index");
    }
    if (v.label == 1 && v.class_index == m.normal_index()) {
      throw ContractError(v.path + ": abnormal video cannot use the normal class index");
    }
    if (v.split.empty()) throw ContractError(v.path + ": missing split tag");
    if (!paths.insert(v.path).second) {
      throw ContractError(v.path + ": listed more than once (splits must partition videos)");
    }
  }
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open manifest " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  DatasetManifest m;
  try {
    m.name = j.at("name").get<std::string>();
    m.dim = j.at("dim").get<int>();
    m.num_classes = j.at("num_classes").get<int>();
    m.classes = j.at("classes").get<std::vector<std::string>>();
    for (const auto& v : j.at("videos")) {
      VideoEntry e;
      e.path = v.at("path").get<std::string>();
      e.label = v.at("label").get<int>();
      e.class_index = v.at("class_index").get<int>();
      e.split = v.at("split").get<std::string>();
      if (v.contains("frame_truth")) e.frame_truth = v.at("frame_truth").get<std::vector<std::uint8_t>>();
      m.videos.push_back(std::move(e));
    }
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  m.base_dir = path.parent_path();
  validate(m);
  return m;
}

void save_manifest(const DatasetManifest& m, const std::filesystem::path& path) {
  validate(m);
  json j;
  j["name"] = m.name;
  j["dim"] = m.dim;
  j["num_classes"] = m.num_classes;
  j["classes"] = m.classes;
  j["videos"] = json::array();
  for (const auto& v : m.videos) {
    json e = {{"path", v.path}, {"label", v.label}, {"class_index", v.class_index}, {"split", v.split}};
    if (v.frame_truth) e["frame_truth"] = *v.frame_truth;
    j["videos"].push_back(std::move(e));
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << j.dump(1) << '\n';
}

std::vector<FeatureSequence> load_split(const DatasetManifest& m, std::string_view split) {
  std::vector<FeatureSequence> out;
  for (const auto& v : m.videos) {
    if (v.split != split) continue;
    std::filesystem::path p = v.path;
    if (p.is_relative()) p = m.base_dir / p;
    FeatureSequence seq;
    seq.video_id = std::filesystem::path(v.path).stem().string();
    seq.frames = load_features(p, m.dim);
    seq.label = v.label;
    seq.class_index = v.class_index;
    if (v.frame_truth) {
      if (static_cast<Eigen::Index>(v.frame_truth->size()) != seq.frames.rows()) {
        throw ContractError(v.path + ": frame_truth length differs from frame count");
      }
      seq.frame_truth = v.frame_truth;
    }
    out.push_back(std::move(seq));
  }
  return out;
}

Matrix class_token_embeddings(const std::vector<std::string>& class_names, std::uint64_t seed,
                              Eigen::Index dim) {
  if (class_names.size() < 2) throw ContractError("need at least two classes");
  if (dim < 1) throw ContractError("token dimension must be >= 1");
  std::set<std::string> seen;
  Matrix tokens(static_cast<Eigen::Index>(class_names.size()), dim);
  for (std::size_t i = 0; i < class_names.size(); ++i) {
    if (!seen.insert(class_names[i]).second) {
      throw ContractError("duplicate class name: " + class_names[i]);
    }
    Rng rng(splitmix64(seed ^ fnv1a64(class_names[i])));
    std::normal_distribution<double> normal(0.0, 1.0);
    double norm2 = 0.0;
    do {
      for (Eigen::Index d = 0; d < dim; ++d) tokens(static_cast<Eigen::Index>(i), d) = normal(rng);
      norm2 = tokens.row(static_cast<Eigen::Index>(i)).squaredNorm();
    } while (norm2 == 0.0);
    tokens.row(static_cast<Eigen::Index>(i)) /= std::sqrt(norm2);
  }
  return tokens;
}

}  // namespace tpwng::data
