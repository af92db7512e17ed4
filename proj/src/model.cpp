#include "tpwng/model.hpp"

#include "tpwng/errors.hpp"
#include "tpwng/random.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace tpwng {

namespace {

// Streams are split so that toggling one module never perturbs another's init.
Rng stream(const TrainConfig& cfg, std::string_view name) { return Rng(derive_seed(cfg.seed, name)); }

prompt::PromptBank make_bank(const std::vector<std::string>& names, Eigen::Index dim, const TrainConfig& cfg) {
  Rng rng = stream(cfg, "prompt");
  return prompt::PromptBank(data::class_token_embeddings(names, data::kTextEncoderSeed, dim),
                            cfg.context_length, rng);
}

prompt::FfnBlock make_ffn(Eigen::Index dim, const TrainConfig& cfg) {
  Rng rng = stream(cfg, "nvp");
  return prompt::FfnBlock(dim, dim * cfg.nvp_ffn_multiplier, rng);
}

tcsal::TcsalStack make_encoder(Eigen::Index dim, const TrainConfig& cfg) {
  Rng rng = stream(cfg, "tcsal");
  return tcsal::TcsalStack(dim, cfg.tcsal, rng);
}

tcsal::FrameClassifier make_classifier(Eigen::Index dim, const TrainConfig& cfg) {
  Rng rng = stream(cfg, "classifier");
  return tcsal::FrameClassifier(dim, rng);
}

constexpr char kMagic[4] = {'T', 'P', 'W', 'P'};

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

void put_f64(std::string& out, double x) {
  const auto bits = std::bit_cast<std::uint64_t>(x);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFFu));
}

class Reader {
 public:
  explicit Reader(std::string bytes) : bytes_(std::move(bytes)) {}

  std::uint64_t uint(int width) {
    need(width);
    std::uint64_t v = 0;
    for (int i = 0; i < width; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[at_ + i])) << (8 * i);
    at_ += width;
    return v;
  }
  double f64() { return std::bit_cast<double>(uint(8)); }
  std::string str(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(at_, n);
    at_ += n;
    return s;
  }
  bool done() const { return at_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (at_ + n > bytes_.size()) throw FormatError("parameter file truncated");
  }
  std::string bytes_;
  std::size_t at_ = 0;
};

std::string serialize(const std::vector<ad::Parameter*>& params) {
  std::string out(kMagic, 4);
  put_u32(out, static_cast<std::uint32_t>(params.size()));
  for (const auto* p : params) {
    put_u32(out, static_cast<std::uint32_t>(p->name().size()));
    out += p->name();
    put_u32(out, static_cast<std::uint32_t>(p->rows()));
    put_u32(out, static_cast<std::uint32_t>(p->cols()));
    for (Eigen::Index i = 0; i < p->size(); ++i) put_f64(out, p->value().data()[i]);
  }
  return out;
}

}  // namespace

Model::Model(const std::vector<std::string>& class_names, Eigen::Index dim, const TrainConfig& cfg)
    : prompts(make_bank(class_names, dim, cfg)),
      nvp_ffn(make_ffn(dim, cfg)),
      encoder(make_encoder(dim, cfg)),
      classifier(make_classifier(dim, cfg)) {}

std::vector<ad::Parameter*> Model::text_parameters() {
  auto out = prompts.parameters();
  auto ffn = nvp_ffn.parameters();
  out.insert(out.end(), ffn.begin(), ffn.end());
  return out;
}

std::vector<ad::Parameter*> Model::scoring_parameters() {
  auto out = encoder.parameters();
  auto cls = classifier.parameters();
  out.insert(out.end(), cls.begin(), cls.end());
  return out;
}

std::vector<ad::Parameter*> Model::parameters() {
  auto out = text_parameters();
  auto scoring = scoring_parameters();
  out.insert(out.end(), scoring.begin(), scoring.end());
  return out;
}

std::uint64_t Model::checksum() { return fnv1a64(serialize(parameters())); }

void Model::save(const std::filesystem::path& path) {
  const std::string bytes = serialize(parameters());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

void Model::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open parameter file " + path.string());
  Reader r(std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>()));
  if (r.str(4) != std::string(kMagic, 4)) throw FormatError(path.string() + ": bad magic");
  auto params = parameters();
  if (r.uint(4) != params.size()) throw FormatError(path.string() + ": parameter count mismatch");
  std::vector<ad::Matrix> values;
  values.reserve(params.size());
  for (auto* p : params) {
    const std::string name = r.str(r.uint(4));
    const auto rows = static_cast<Eigen::Index>(r.uint(4));
    const auto cols = static_cast<Eigen::Index>(r.uint(4));
    if (name != p->name() || rows != p->rows() || cols != p->cols()) {
      throw FormatError(path.string() + ": layout mismatch at " + p->name());
    }
    ad::Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = r.f64();
    values.push_back(std::move(m));
  }
  if (!r.done()) throw FormatError(path.string() + ": trailing bytes");
  for (std::size_t i = 0; i < params.size(); ++i) params[i]->value() = std::move(values[i]);
}

Model make_model(const data::DatasetManifest& manifest, const TrainConfig& cfg) {
  return Model(manifest.classes, manifest.dim, cfg);
}

}  // namespace tpwng
