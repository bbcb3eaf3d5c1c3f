#include "moodgan/gancore.hpp"

#include "moodgan/corpus.hpp"

namespace moodgan::gan {

std::string to_string(ConditionKind kind) {
  switch (kind) {
    case ConditionKind::kDiscrete7: return "discrete7";
    case ConditionKind::kAv2: return "av2";
    case ConditionKind::kMood3: return "mood3";
  }
  return "mood3";
}

ConditionKind parse_condition_kind(const std::string& name) {
  if (name == "discrete7") return ConditionKind::kDiscrete7;
  if (name == "av2") return ConditionKind::kAv2;
  if (name == "mood3") return ConditionKind::kMood3;
  throw std::invalid_argument("unknown condition space '" + name + "' (expected discrete7, av2 or mood3)");
}

ConditionSpace ConditionSpace::make(ConditionKind kind, std::optional<double> lambda_reg) {
  ConditionSpace space;
  space.kind = kind;
  switch (kind) {
    case ConditionKind::kDiscrete7:
      space.dim = kNumClasses;
      space.loss_kind = LossKind::kClassification;
      space.lambda_reg = lambda_reg.value_or(1.0);
      break;
    case ConditionKind::kAv2:
      space.dim = 2;
      space.loss_kind = LossKind::kRegression;
      space.lambda_reg = lambda_reg.value_or(3.0);
      break;
    case ConditionKind::kMood3:
      space.dim = 3;
      space.loss_kind = LossKind::kRegression;
      space.lambda_reg = lambda_reg.value_or(3.0);
      break;
  }
  space.validate();
  return space;
}

void ConditionSpace::validate() const {
  const int expected_dim = kind == ConditionKind::kDiscrete7 ? kNumClasses : kind == ConditionKind::kAv2 ? 2 : 3;
  if (dim != expected_dim) throw std::invalid_argument("condition space " + to_string(kind) + ": wrong dimension");
  const LossKind expected_loss = kind == ConditionKind::kDiscrete7 ? LossKind::kClassification : LossKind::kRegression;
  if (loss_kind != expected_loss) throw std::invalid_argument("condition space " + to_string(kind) + ": wrong loss kind");
  if (!(lambda_reg > 0)) throw std::invalid_argument("condition space " + to_string(kind) + ": lambda_reg must be > 0");
}

std::string ConditionSpace::field() const {
  switch (kind) {
    case ConditionKind::kDiscrete7: return "emotion";
    case ConditionKind::kAv2: return "valence/arousal";
    case ConditionKind::kMood3: return "mood";
  }
  return "mood";
}

Eigen::VectorXf encode_condition(const ConditionSpace& space, const ImageSample& sample) {
  auto missing = [&] {
    return std::invalid_argument("sample '" + sample.path + "' lacks field '" + space.field() +
                                 "' required by condition space " + to_string(space.kind));
  };
  switch (space.kind) {
    case ConditionKind::kDiscrete7: {
      if (!sample.emotion) throw missing();
      Eigen::VectorXf v = Eigen::VectorXf::Zero(kNumClasses);
      v[*sample.emotion] = 1.0f;
      return v;
    }
    case ConditionKind::kAv2:
      if (!sample.av) throw missing();
      return sample.av->cast<float>();
    case ConditionKind::kMood3:
      if (!sample.mood) throw missing();
      return sample.mood->cast<float>();
  }
  throw missing();
}

}  // namespace moodgan::gan
