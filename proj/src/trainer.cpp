#include "moodgan/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <type_traits>

#include "json.hpp"

namespace moodgan::train {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using nn::FeatureMap;
using nn::Mat;
using nn::Var;

// ---------------------------------------------------------------------------
// Config.

void TrainConfig::validate() const {
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (!(lr > 0)) throw std::invalid_argument("lr must be > 0");
  if (!(lr_decay > 0 && lr_decay <= 1)) throw std::invalid_argument("lr_decay must lie in (0, 1]");
  if (iterations < 0) throw std::invalid_argument("iterations must be >= 0");
  if (n_critic < 1) throw std::invalid_argument("n_critic must be >= 1");
  if (checkpoint_every < 0) throw std::invalid_argument("checkpoint_every must be >= 0");
  if (image_size < 1) throw std::invalid_argument("image_size must be >= 1");
  if (!(adam_beta1 >= 0 && adam_beta1 < 1 && adam_beta2 >= 0 && adam_beta2 < 1)) {
    throw std::invalid_argument("adam betas must lie in [0, 1)");
  }
  if (preset != "desk" && preset != "full" && preset != "tiny") {
    throw std::invalid_argument("preset must be desk, full or tiny");
  }
  condition_space.validate();
  weights.validate();
  augment_policy().validate();
}

AugmentPolicy TrainConfig::augment_policy() const {
  return {{augment_scale_min, augment_scale_max}, augment_rotation_deg, augment_hflip_prob};
}

double TrainConfig::learning_rate(long iteration) const {
  return lr * std::pow(lr_decay, static_cast<double>(iteration / kDecayInterval));
}

Settings parse_settings(const std::string& text) {
  Settings out;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  auto trim = [](std::string s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return std::string();
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("config line " + std::to_string(line_no) + ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw std::invalid_argument("config line " + std::to_string(line_no) + ": empty key");
    out[key] = trim(line.substr(eq + 1));
  }
  return out;
}

Settings read_settings(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read config " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_settings(buffer.str());
}

namespace {

template <typename T>
T parse_value(const std::string& key, const std::string& text) {
  std::istringstream in(text);
  T value{};
  in >> value;
  const bool wrapped = std::is_unsigned_v<T> && text.find('-') != std::string::npos;
  if (!in || wrapped || !(in >> std::ws).eof()) {
    throw std::invalid_argument("config key '" + key + "': cannot parse '" + text + "'");
  }
  return value;
}

}  // namespace

TrainConfig make_config(const Settings& settings, TrainConfig base) {
  TrainConfig c = std::move(base);
  std::optional<double> lambda_reg;
  if (auto it = settings.find("lambda_reg"); it != settings.end()) {
    lambda_reg = parse_value<double>(it->first, it->second);
  }
  if (auto it = settings.find("condition_space"); it != settings.end()) {
    c.condition_space = gan::ConditionSpace::make(gan::parse_condition_kind(it->second), lambda_reg);
  } else if (lambda_reg) {
    c.condition_space = gan::ConditionSpace::make(c.condition_space.kind, lambda_reg);
  }
  c.weights.lambda_reg = c.condition_space.lambda_reg;

  for (const auto& [key, value] : settings) {
    if (key == "batch_size") c.batch_size = parse_value<int>(key, value);
    else if (key == "lr") c.lr = parse_value<double>(key, value);
    else if (key == "lr_decay") c.lr_decay = parse_value<double>(key, value);
    else if (key == "iterations") c.iterations = parse_value<long>(key, value);
    else if (key == "seed") c.seed = parse_value<std::uint64_t>(key, value);
    else if (key == "n_critic") c.n_critic = parse_value<int>(key, value);
    else if (key == "checkpoint_every") c.checkpoint_every = parse_value<long>(key, value);
    else if (key == "image_size") c.image_size = parse_value<int>(key, value);
    else if (key == "condition_space" || key == "lambda_reg") continue;
    else if (key == "lambda_rec") c.weights.lambda_rec = parse_value<double>(key, value);
    else if (key == "lambda_gp") c.weights.lambda_gp = parse_value<double>(key, value);
    else if (key == "preset") c.preset = value;
    else if (key == "adam_beta1") c.adam_beta1 = parse_value<double>(key, value);
    else if (key == "adam_beta2") c.adam_beta2 = parse_value<double>(key, value);
    else if (key == "augment_scale_min") c.augment_scale_min = parse_value<double>(key, value);
    else if (key == "augment_scale_max") c.augment_scale_max = parse_value<double>(key, value);
    else if (key == "augment_rotation_deg") c.augment_rotation_deg = parse_value<double>(key, value);
    else if (key == "augment_hflip_prob") c.augment_hflip_prob = parse_value<double>(key, value);
    else throw std::invalid_argument("unknown config key '" + key + "'");
  }
  c.validate();
  return c;
}

std::string format_config(const TrainConfig& c) {
  std::ostringstream out;
  out << std::setprecision(17);
  out << "batch_size = " << c.batch_size << '\n'
      << "lr = " << c.lr << '\n'
      << "lr_decay = " << c.lr_decay << '\n'
      << "iterations = " << c.iterations << '\n'
      << "seed = " << c.seed << '\n'
      << "n_critic = " << c.n_critic << '\n'
      << "checkpoint_every = " << c.checkpoint_every << '\n'
      << "image_size = " << c.image_size << '\n'
      << "condition_space = " << gan::to_string(c.condition_space.kind) << '\n'
      << "lambda_reg = " << c.weights.lambda_reg << '\n'
      << "lambda_rec = " << c.weights.lambda_rec << '\n'
      << "lambda_gp = " << c.weights.lambda_gp << '\n'
      << "preset = " << c.preset << '\n'
      << "adam_beta1 = " << c.adam_beta1 << '\n'
      << "adam_beta2 = " << c.adam_beta2 << '\n'
      << "augment_scale_min = " << c.augment_scale_min << '\n'
      << "augment_scale_max = " << c.augment_scale_max << '\n'
      << "augment_rotation_deg = " << c.augment_rotation_deg << '\n'
      << "augment_hflip_prob = " << c.augment_hflip_prob << '\n';
  return out.str();
}

// ---------------------------------------------------------------------------
// Logs.

double LogRecord::term(const std::string& name) const {
  for (const auto& [key, value] : terms) {
    if (key == name) return value;
  }
  throw std::out_of_range("log record has no term '" + name + "'");
}

void TrainLog::write_jsonl(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  for (const auto& r : records) {
    json row;
    row["iteration"] = r.iteration;
    for (const auto& [key, value] : r.terms) row[key] = value;
    row["lr"] = r.lr;
    row["wall_time"] = r.wall_time;
    out << row.dump() << '\n';
  }
  if (!out) throw std::runtime_error("failed writing " + path);
}

TrainLog TrainLog::read_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  TrainLog log;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto row = json::parse(line);
    LogRecord r;
    for (const auto& [key, value] : row.items()) {
      if (key == "iteration") r.iteration = value.get<long>();
      else if (key == "lr") r.lr = value.get<double>();
      else if (key == "wall_time") r.wall_time = value.get<double>();
      else r.terms.emplace_back(key, value.get<double>());
    }
    log.records.push_back(std::move(r));
  }
  return log;
}

std::vector<double> TrainLog::series(const std::string& name) const {
  std::vector<double> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(r.term(name));
  return out;
}

// ---------------------------------------------------------------------------
// Shared training plumbing.

namespace {

class Clock {
 public:
  double elapsed() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag) { return Rng::derive({seed, tag}).next(); }

/// Endless stream of sample positions, reshuffled every epoch.
class BatchStream {
 public:
  struct Pick {
    int sample;
    std::uint64_t epoch;
  };

  BatchStream(std::vector<int> pool, std::uint64_t seed, std::uint64_t tag)
      : pool_(std::move(pool)), seed_(seed), tag_(tag) {
    if (pool_.empty()) throw std::invalid_argument("empty training split");
  }

  std::vector<Pick> next(int count) {
    std::vector<Pick> out;
    out.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
      const std::uint64_t epoch = position_ / pool_.size();
      const std::size_t slot = position_ % pool_.size();
      if (order_.empty() || epoch != order_epoch_) {
        order_ = Rng::derive({seed_, tag_, epoch}).permutation(static_cast<int>(pool_.size()));
        order_epoch_ = epoch;
      }
      out.push_back({pool_[static_cast<std::size_t>(order_[slot])], epoch});
      ++position_;
    }
    return out;
  }

 private:
  std::vector<int> pool_;
  std::uint64_t seed_;
  std::uint64_t tag_;
  std::uint64_t position_ = 0;
  std::vector<int> order_;
  std::uint64_t order_epoch_ = 0;
};

ImageBatch augmented_batch(const Corpus& corpus, const std::vector<BatchStream::Pick>& picks,
                           const AugmentPolicy& policy, std::uint64_t seed) {
  std::vector<Image> images;
  images.reserve(picks.size());
  for (const auto& p : picks) {
    const auto& sample = corpus.samples[static_cast<std::size_t>(p.sample)];
    images.push_back(
        apply_augmentation(sample.image, draw_augmentation(policy, seed, p.epoch, static_cast<std::uint64_t>(p.sample))));
  }
  return stack(images);
}

void require_image_size(const Corpus& corpus, int size) {
  for (const auto& s : corpus.samples) {
    if (s.image.height != size || s.image.width != size) {
      throw std::invalid_argument("corpus images are " + std::to_string(s.image.height) + "x" +
                                  std::to_string(s.image.width) + " but image_size is " + std::to_string(size));
    }
  }
}

bool checkpoint_due(const TrainConfig& config, long done) {
  return config.checkpoint_every > 0 && done % config.checkpoint_every == 0 && done < config.iterations;
}

std::string scheduled_dir(const std::string& out_dir, long done) {
  std::ostringstream name;
  name << "iter_" << std::setw(7) << std::setfill('0') << done;
  return (fs::path(out_dir) / "checkpoints" / name.str()).string();
}

void prepare_out_dir(const std::string& out_dir) {
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw std::runtime_error("cannot create " + out_dir + ": " + ec.message());
}

constexpr std::uint64_t kInitTag = 0x1417;
constexpr std::uint64_t kDataTag = 0xda7a;
constexpr std::uint64_t kTargetTag = 0x7a26;
constexpr std::uint64_t kMixTag = 0x3174;

/// Shared loop of the two supervised regressors/classifiers.
template <typename Model, typename LossFn, typename SaveFn>
TrainLog supervised_loop(Model& model, const TrainConfig& config, const Corpus& corpus, std::vector<int> pool,
                         const std::string& out_dir, const ProgressFn& progress, LossFn&& loss_fn,
                         SaveFn&& save) {
  prepare_out_dir(out_dir);
  TrainLog log;
  nn::Adam<float> adam(model.parameters().vars(), config.adam_beta1, config.adam_beta2);
  BatchStream stream(std::move(pool), config.seed, kDataTag);
  const AugmentPolicy policy = config.augment_policy();
  const auto params = model.parameters().vars();
  Clock clock;
  for (long k = 0; k < config.iterations; ++k) {
    const double lr = config.learning_rate(k);
    const auto picks = stream.next(config.batch_size);
    const auto batch = augmented_batch(corpus, picks, policy, config.seed);
    auto [loss, terms] = loss_fn(nn::to_feature_map<float>(batch), picks);
    adam.step(nn::grad(loss, params), lr);
    LogRecord record{k, std::move(terms), lr, clock.elapsed()};
    if (progress) progress(record);
    log.records.push_back(std::move(record));
    if (checkpoint_due(config, k + 1)) save(scheduled_dir(out_dir, k + 1));
  }
  save((fs::path(out_dir) / "checkpoint").string());
  log.write_jsonl((fs::path(out_dir) / "train_log.jsonl").string());
  return log;
}

}  // namespace

repr::BackboneSpec backbone_for(const std::string& preset) {
  if (preset == "desk") return repr::BackboneSpec::desk();
  if (preset == "full") return repr::BackboneSpec::full();
  if (preset == "tiny") return repr::BackboneSpec::tiny();
  throw std::invalid_argument("unknown preset '" + preset + "'");
}

ReprRun train_repr(const TrainConfig& config, const Corpus& corpus, const std::string& out_dir,
                   const ProgressFn& progress) {
  config.validate();
  require_image_size(corpus, config.image_size);
  std::vector<int> pool;
  std::vector<int> labels(corpus.samples.size(), -1);
  for (std::size_t i = 0; i < corpus.samples.size(); ++i) {
    const auto& s = corpus.samples[i];
    if (s.split == Split::kTrain && s.emotion) {
      pool.push_back(static_cast<int>(i));
      labels[i] = *s.emotion;
    }
  }
  if (pool.empty()) throw std::invalid_argument("train_repr: no labelled samples in the train split");

  ReprRun run{repr::ReprModel<float>(config.image_size, backbone_for(config.preset), derive_seed(config.seed, kInitTag)),
              {}};
  auto loss_fn = [&](const FeatureMap<float>& x, const std::vector<BatchStream::Pick>& picks) {
    std::vector<int> y;
    for (const auto& p : picks) y.push_back(labels[static_cast<std::size_t>(p.sample)]);
    auto logits = run.model.logits(x);
    auto loss = gan::cross_entropy(logits, y);
    const auto predicted = repr::argmax_columns(logits.value());
    int correct = 0;
    for (std::size_t n = 0; n < y.size(); ++n) correct += predicted[n] == y[n];
    std::vector<std::pair<std::string, double>> terms{
        {"cross_entropy", static_cast<double>(loss.item())},
        {"batch_accuracy", static_cast<double>(correct) / static_cast<double>(y.size())}};
    return std::make_pair(loss, terms);
  };
  run.log = supervised_loop(run.model, config, corpus, std::move(pool), out_dir, progress, loss_fn,
                            [&](const std::string& dir) { repr::save_checkpoint(run.model, dir); });
  return run;
}

AvRun train_av(const TrainConfig& config, const Corpus& corpus, const std::string& out_dir,
               const ProgressFn& progress) {
  config.validate();
  require_image_size(corpus, config.image_size);
  std::vector<int> pool;
  for (std::size_t i = 0; i < corpus.samples.size(); ++i) {
    const auto& s = corpus.samples[i];
    if (s.split == Split::kTrain && s.av) pool.push_back(static_cast<int>(i));
  }
  if (pool.empty()) throw std::invalid_argument("train_av: no valence/arousal annotations in the train split");

  AvRun run{repr::AvEstimator<float>(config.image_size, backbone_for(config.preset), derive_seed(config.seed, kInitTag)),
            {}};
  auto loss_fn = [&](const FeatureMap<float>& x, const std::vector<BatchStream::Pick>& picks) {
    Mat<float> target(2, static_cast<Eigen::Index>(picks.size()));
    for (std::size_t n = 0; n < picks.size(); ++n) {
      target.col(static_cast<Eigen::Index>(n)) = corpus.samples[static_cast<std::size_t>(picks[n].sample)].av->cast<float>();
    }
    auto loss = gan::regression_loss(run.model(x), Var<float>::constant(std::move(target)));
    std::vector<std::pair<std::string, double>> terms{{"mse", static_cast<double>(loss.item())}};
    return std::make_pair(loss, terms);
  };
  run.log = supervised_loop(run.model, config, corpus, std::move(pool), out_dir, progress, loss_fn,
                            [&](const std::string& dir) { repr::save_checkpoint(run.model, dir); });
  return run;
}

// ---------------------------------------------------------------------------
// GANs.

GanSpecs gan_specs_for(const std::string& preset) {
  if (preset == "desk") return {gan::GeneratorSpec::desk(), gan::DiscriminatorSpec::desk()};
  if (preset == "full") return {gan::GeneratorSpec::full(), gan::DiscriminatorSpec::full()};
  if (preset == "tiny") return {{4, 1, 1, 3, false}, {4, 2}};
  throw std::invalid_argument("unknown preset '" + preset + "'");
}

std::vector<int> target_permutation(std::uint64_t seed, std::uint64_t step_key, int batch) {
  return Rng::derive({seed, kTargetTag, step_key}).permutation(batch);
}

const std::vector<std::string>& gan_terms() {
  static const std::vector<std::string> names{"d_adv", "gp", "reg_real", "g_adv", "reg_fake", "rec"};
  return names;
}

namespace {

struct ConditionTable {
  Mat<float> values;        // [dim, samples]; zero columns for unused samples
  std::vector<int> labels;  // emotion per sample (discrete spaces), else -1
};

ConditionTable condition_table(const gan::ConditionSpace& space, const Corpus& corpus, const std::vector<int>& pool) {
  ConditionTable table{Mat<float>::Zero(space.dim, static_cast<Eigen::Index>(corpus.samples.size())),
                       std::vector<int>(corpus.samples.size(), -1)};
  for (int i : pool) {
    const auto& s = corpus.samples[static_cast<std::size_t>(i)];
    table.values.col(i) = gan::encode_condition(space, s);
    if (space.kind == gan::ConditionKind::kDiscrete7) table.labels[static_cast<std::size_t>(i)] = *s.emotion;
  }
  return table;
}

struct GanBatch {
  FeatureMap<float> images;
  Var<float> source;
  Var<float> target;
  std::vector<int> source_labels;
  std::vector<int> target_labels;
};

GanBatch gan_batch(const Corpus& corpus, const ConditionTable& table, const std::vector<BatchStream::Pick>& picks,
                   const TrainConfig& config, std::uint64_t step_key) {
  const auto images = augmented_batch(corpus, picks, config.augment_policy(), config.seed);
  const auto n = static_cast<Eigen::Index>(picks.size());
  const auto order = target_permutation(config.seed, step_key, static_cast<int>(n));
  Mat<float> source(table.values.rows(), n), target(table.values.rows(), n);
  GanBatch batch;
  for (Eigen::Index j = 0; j < n; ++j) {
    source.col(j) = table.values.col(picks[static_cast<std::size_t>(j)].sample);
    batch.source_labels.push_back(table.labels[static_cast<std::size_t>(picks[static_cast<std::size_t>(j)].sample)]);
  }
  for (Eigen::Index j = 0; j < n; ++j) {
    target.col(j) = source.col(order[static_cast<std::size_t>(j)]);
    batch.target_labels.push_back(batch.source_labels[static_cast<std::size_t>(order[static_cast<std::size_t>(j)])]);
  }
  batch.images = nn::to_feature_map<float>(images);
  batch.source = Var<float>::constant(std::move(source));
  batch.target = Var<float>::constant(std::move(target));
  return batch;
}

Var<float> condition_loss(const gan::ConditionSpace& space, const Var<float>& predicted, const Var<float>& wanted,
                          const std::vector<int>& labels) {
  if (space.loss_kind == gan::LossKind::kClassification) return gan::cross_entropy(predicted, labels);
  return gan::regression_loss(predicted, wanted);
}

json gan_metadata(const GanRun& run) {
  json meta;
  meta["schema_version"] = 1;
  meta["kind"] = "gan";
  meta["condition_space"] = gan::to_string(run.space.kind);
  meta["image_size"] = run.image_size;
  meta["iteration"] = run.iteration;
  meta["lambda_reg"] = run.space.lambda_reg;
  const auto& g = run.specs.generator;
  meta["generator"] = {{"base_channels", g.base_channels},
                       {"downsamples", g.downsamples},
                       {"residual_blocks", g.residual_blocks},
                       {"edge_kernel", g.edge_kernel},
                       {"instance_norm", g.instance_norm}};
  meta["discriminator"] = {{"base_channels", run.specs.discriminator.base_channels},
                           {"downsamples", run.specs.discriminator.downsamples}};
  return meta;
}

}  // namespace

GanRun train_gan(const TrainConfig& config, const Corpus& corpus, const std::string& out_dir,
                 const ProgressFn& progress) {
  config.validate();
  require_image_size(corpus, config.image_size);
  const auto& space = config.condition_space;
  std::vector<int> pool;
  for (std::size_t i = 0; i < corpus.samples.size(); ++i) {
    if (corpus.samples[i].split == Split::kTrain) pool.push_back(static_cast<int>(i));
  }
  if (pool.empty()) throw std::invalid_argument("train_gan: empty train split");
  const ConditionTable table = condition_table(space, corpus, pool);

  const GanSpecs specs = gan_specs_for(config.preset);
  GanRun run{space,
             config.image_size,
             0,
             specs,
             gan::Generator<float>(space.dim, specs.generator, derive_seed(config.seed, kInitTag)),
             gan::Discriminator<float>(space.dim, config.image_size, specs.discriminator,
                                       derive_seed(config.seed, kInitTag + 1)),
             {}};
  prepare_out_dir(out_dir);

  const auto& G = run.generator;
  const auto& D = run.discriminator;
  const auto g_params = run.generator.parameters().vars();
  const auto d_params = run.discriminator.parameters().vars();
  nn::Adam<float> adam_g(g_params, config.adam_beta1, config.adam_beta2);
  nn::Adam<float> adam_d(d_params, config.adam_beta1, config.adam_beta2);
  BatchStream stream(pool, config.seed, kDataTag);
  const auto& w = config.weights;
  Clock clock;

  for (long k = 0; k < config.iterations; ++k) {
    const double lr = config.learning_rate(k);
    const auto step_base = static_cast<std::uint64_t>(k) * static_cast<std::uint64_t>(config.n_critic + 1);
    double d_adv = 0, gp = 0, reg_real = 0;
    for (int c = 0; c < config.n_critic; ++c) {
      const auto key = step_base + static_cast<std::uint64_t>(c);
      auto batch = gan_batch(corpus, table, stream.next(config.batch_size), config, key);
      FeatureMap<float> fake;
      {
        nn::NoGradGuard no_grad;
        fake = G(batch.images, batch.target);
      }
      Rng mix = Rng::derive({config.seed, kMixTag, key});
      const auto interp = gan::interpolate(batch.images, fake, mix);
      auto out_real = D(batch.images);
      auto adv = nn::mean(D(fake).score) - nn::mean(out_real.score);
      auto penalty = gan::gradient_penalty(D, interp);
      auto reg = condition_loss(space, out_real.condition, batch.source, batch.source_labels);
      auto total = adv + penalty * static_cast<float>(w.lambda_gp) + reg * static_cast<float>(w.lambda_reg);
      adam_d.step(nn::grad(total, d_params), lr);
      d_adv = adv.item();
      gp = penalty.item();
      reg_real = reg.item();
    }

    const auto key = step_base + static_cast<std::uint64_t>(config.n_critic);
    auto batch = gan_batch(corpus, table, stream.next(config.batch_size), config, key);
    auto fake = G(batch.images, batch.target);
    auto out_fake = D(fake);
    auto g_adv = -nn::mean(out_fake.score);
    auto reg_fake = condition_loss(space, out_fake.condition, batch.target, batch.target_labels);
    auto round_trip = G(fake, batch.source);
    auto rec = nn::mean(nn::abs(batch.images.data - round_trip.data));
    auto total = g_adv + reg_fake * static_cast<float>(w.lambda_reg) + rec * static_cast<float>(w.lambda_rec);
    adam_g.step(nn::grad(total, g_params), lr);

    LogRecord record{k,
                     {{"d_adv", d_adv},
                      {"gp", gp},
                      {"reg_real", reg_real},
                      {"g_adv", static_cast<double>(g_adv.item())},
                      {"reg_fake", static_cast<double>(reg_fake.item())},
                      {"rec", static_cast<double>(rec.item())}},
                     lr,
                     clock.elapsed()};
    if (progress) progress(record);
    run.log.records.push_back(std::move(record));
    run.iteration = k + 1;
    if (checkpoint_due(config, k + 1)) save_gan(run, scheduled_dir(out_dir, k + 1));
  }
  save_gan(run, (fs::path(out_dir) / "checkpoint").string());
  run.log.write_jsonl((fs::path(out_dir) / "train_log.jsonl").string());
  return run;
}

void save_gan(const GanRun& run, const std::string& dir) {
  prepare_out_dir(dir);
  std::ofstream out(fs::path(dir) / "metadata.json");
  if (!out) throw std::runtime_error("cannot write metadata in " + dir);
  out << gan_metadata(run).dump(2) << '\n';
  out.close();
  nn::save_parameters(run.generator.parameters(), (fs::path(dir) / "generator.bin").string());
  nn::save_parameters(run.discriminator.parameters(), (fs::path(dir) / "discriminator.bin").string());
}

GanRun load_gan(const std::string& dir) {
  const fs::path path = fs::path(dir) / "metadata.json";
  std::ifstream in(path);
  if (!in) throw std::runtime_error("GAN checkpoint not found: " + path.string());
  try {
    const auto meta = json::parse(in);
    if (meta.at("schema_version").get<int>() != 1 || meta.at("kind").get<std::string>() != "gan") {
      throw std::runtime_error(path.string() + " is not a GAN checkpoint");
    }
    std::optional<double> lambda_reg;
    if (meta.contains("lambda_reg")) lambda_reg = meta.at("lambda_reg").get<double>();
    const auto space =
        gan::ConditionSpace::make(gan::parse_condition_kind(meta.at("condition_space").get<std::string>()), lambda_reg);
    const auto& g = meta.at("generator");
    const auto& d = meta.at("discriminator");
    GanSpecs specs{{g.at("base_channels").get<int>(), g.at("downsamples").get<int>(), g.at("residual_blocks").get<int>(),
                    g.at("edge_kernel").get<int>(), g.at("instance_norm").get<bool>()},
                   {d.at("base_channels").get<int>(), d.at("downsamples").get<int>()}};
    const int size = meta.at("image_size").get<int>();
    GanRun run{space,
               size,
               meta.at("iteration").get<long>(),
               specs,
               gan::Generator<float>(space.dim, specs.generator, 0),
               gan::Discriminator<float>(space.dim, size, specs.discriminator, 0),
               {}};
    nn::load_parameters(run.generator.parameters(), (fs::path(dir) / "generator.bin").string());
    nn::load_parameters(run.discriminator.parameters(), (fs::path(dir) / "discriminator.bin").string());
    return run;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("malformed GAN metadata in " + path.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Finite differences.

std::string to_string(LossTerm term) {
  switch (term) {
    case LossTerm::kDiscriminatorAdversarial: return "d_adv";
    case LossTerm::kGeneratorAdversarial: return "g_adv";
    case LossTerm::kGradientPenalty: return "gp";
    case LossTerm::kRegressionReal: return "reg_real";
    case LossTerm::kRegressionFake: return "reg_fake";
    case LossTerm::kClassificationReal: return "cls_real";
    case LossTerm::kClassificationFake: return "cls_fake";
    case LossTerm::kReconstruction: return "rec";
    case LossTerm::kReprCrossEntropy: return "repr_cross_entropy";
  }
  return "unknown";
}

double relative_error(double analytic, double numeric) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / scale;
}

namespace {

GradientCheck check_network(const std::string& name, nn::ParameterSet<double>& params,
                            const std::function<Var<double>()>& loss, const ToyConfig& toy, std::uint64_t tag) {
  GradientCheck check;
  check.network = name;
  check.parameter_count = params.scalar_count();
  const auto vars = params.vars();
  const auto analytic = nn::grad(loss(), vars);
  Rng rng = Rng::derive({toy.seed, tag});
  for (int p = 0; p < toy.probes; ++p) {
    auto flat = rng.below(check.parameter_count);
    std::size_t entry = 0;
    while (flat >= static_cast<std::uint64_t>(vars[entry].size())) {
      flat -= static_cast<std::uint64_t>(vars[entry].size());
      ++entry;
    }
    auto var = vars[entry];
    double& weight = var.mutable_value().data()[flat];
    const double original = weight;
    double plus = 0, minus = 0;
    {
      nn::NoGradGuard no_grad;
      weight = original + toy.step;
      plus = loss().item();
      weight = original - toy.step;
      minus = loss().item();
    }
    weight = original;
    const double numeric = (plus - minus) / (2 * toy.step);
    const double exact = analytic[entry].value().data()[flat];
    check.analytic.push_back(exact);
    check.numeric.push_back(numeric);
    check.max_relative_error = std::max(check.max_relative_error, relative_error(exact, numeric));
  }
  return check;
}

Mat<double> uniform_block(Eigen::Index rows, Eigen::Index cols, double bound, Rng& rng) {
  return nn::uniform_matrix<double>(rows, cols, bound, rng);
}

}  // namespace

FiniteDifferenceReport finite_difference_report(LossTerm term, const ToyConfig& toy) {
  if (toy.image_size > 8 || toy.image_size < 4 || toy.image_size % 4 != 0) {
    throw std::invalid_argument("toy image size must be 4 or 8");
  }
  FiniteDifferenceReport report{term, {}, 0.0};
  Rng rng = Rng::derive({toy.seed, 0x70f});
  const int size = toy.image_size, n = toy.batch;
  const Eigen::Index cols = static_cast<Eigen::Index>(n) * size * size;
  FeatureMap<double> x{Var<double>::constant(uniform_block(3, cols, 0.9, rng)), n, size, size};

  if (term == LossTerm::kReprCrossEntropy) {
    repr::ReprModel<double> model(size, repr::BackboneSpec::tiny(), derive_seed(toy.seed, 1));
    std::vector<int> labels;
    for (int i = 0; i < n; ++i) labels.push_back(static_cast<int>(rng.below(kNumClasses)));
    auto loss = [&] { return gan::cross_entropy(model.logits(x), labels); };
    report.checks.push_back(check_network("repr", model.parameters(), loss, toy, 11));
  } else {
    const bool discrete = term == LossTerm::kClassificationReal || term == LossTerm::kClassificationFake;
    const auto space = gan::ConditionSpace::make(discrete ? gan::ConditionKind::kDiscrete7 : gan::ConditionKind::kMood3);
    gan::Generator<double> G(space.dim, {4, 1, 1, 3, true}, derive_seed(toy.seed, 2));
    gan::Discriminator<double> D(space.dim, size, {4, 2}, derive_seed(toy.seed, 3));
    std::vector<int> source_labels, target_labels;
    for (int i = 0; i < n; ++i) {
      source_labels.push_back(static_cast<int>(rng.below(kNumClasses)));
      target_labels.push_back(static_cast<int>(rng.below(kNumClasses)));
    }
    const auto source = discrete ? gan::one_hot<double>(source_labels, space.dim)
                                 : Var<double>::constant(uniform_block(space.dim, n, 1.0, rng));
    const auto target = discrete ? gan::one_hot<double>(target_labels, space.dim)
                                 : Var<double>::constant(uniform_block(space.dim, n, 1.0, rng));
    FeatureMap<double> fixed_fake;
    {
      nn::NoGradGuard no_grad;
      fixed_fake = G(x, target);
    }
    Rng mix = Rng::derive({toy.seed, 4});
    const auto interp = gan::interpolate(x, fixed_fake, mix);

    std::function<Var<double>()> loss;
    bool check_g = true, check_d = true;
    switch (term) {
      case LossTerm::kDiscriminatorAdversarial:
        loss = [&] { return nn::mean(D(fixed_fake).score) - nn::mean(D(x).score); };
        check_g = false;
        break;
      case LossTerm::kGradientPenalty:
        loss = [&] { return gan::gradient_penalty(D, interp); };
        check_g = false;
        break;
      case LossTerm::kRegressionReal:
        loss = [&] { return gan::regression_loss_real(space, D, x, source); };
        check_g = false;
        break;
      case LossTerm::kClassificationReal:
        loss = [&] { return gan::classification_loss_real(space, D, x, source_labels); };
        check_g = false;
        break;
      case LossTerm::kGeneratorAdversarial:
        loss = [&] { return -nn::mean(D(G(x, target)).score); };
        break;
      case LossTerm::kRegressionFake:
        loss = [&] { return gan::regression_loss_fake(space, D, G, x, target); };
        break;
      case LossTerm::kClassificationFake:
        loss = [&] { return gan::classification_loss_fake(space, D, G, x, target_labels); };
        break;
      case LossTerm::kReconstruction:
        loss = [&] { return gan::reconstruction_loss(G, x, source, target); };
        check_d = false;
        break;
      case LossTerm::kReprCrossEntropy:
        break;
    }
    if (check_g) report.checks.push_back(check_network("generator", G.parameters(), loss, toy, 21));
    if (check_d) report.checks.push_back(check_network("discriminator", D.parameters(), loss, toy, 22));
  }
  for (const auto& c : report.checks) report.max_relative_error = std::max(report.max_relative_error, c.max_relative_error);
  return report;
}

}  // namespace moodgan::train
