#include "advcloak/distill.hpp"

#include <algorithm>
#include <chrono>
#include <numeric>

#include "advcloak/batch.hpp"
#include "advcloak/errors.hpp"

namespace advcloak {

void DistillConfig::validate() const {
  optimizer.validate();
  if (epochs < 1) throw ConfigError("distill: epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("distill: batch_size must be >= 1");
  if (validation_images < 1) throw ConfigError("distill: validation_images must be >= 1");
  try {
    student.validate();
  } catch (const InvalidArgument& e) {
    throw ConfigError(std::string("distill: ") + e.what());
  }
}

nlohmann::json DistillConfig::to_json() const {
  return {{"loss", "mse_on_perturbation"}, {"optimizer", optimizer.to_json()}, {"epochs", epochs},
          {"batch_size", batch_size}, {"seed", seed}, {"student", student.to_json()},
          {"validation_images", validation_images}};
}

DistillConfig DistillConfig::from_json(const nlohmann::json& j) {
  if (j.at("loss").get<std::string>() != "mse_on_perturbation") {
    throw ConfigError("distill: only loss 'mse_on_perturbation' is supported");
  }
  DistillConfig c;
  c.optimizer = OptimizerConfig::from_json(j.at("optimizer"));
  c.epochs = j.at("epochs").get<int>();
  c.batch_size = j.at("batch_size").get<int>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.student = StudentSpec::from_json(j.at("student"));
  c.validation_images = j.at("validation_images").get<int>();
  return c;
}

double DistillReport::parameter_ratio() const {
  return teacher_parameters == 0 ? 0.0
                                 : static_cast<double>(student_parameters) / static_cast<double>(teacher_parameters);
}

nlohmann::json DistillReport::to_json() const {
  return {{"teacher_parameters", teacher_parameters}, {"student_parameters", student_parameters},
          {"parameter_ratio", parameter_ratio()}, {"teacher_hash", teacher_hash},
          {"epoch_train_loss", epoch_train_loss}, {"epoch_validation_loss", epoch_validation_loss},
          {"epoch_seconds", epoch_seconds}};
}

double perturbation_mse(const Tensor& a, const Tensor& b) {
  if (!(a.shape() == b.shape())) {
    throw InvalidArgument("distill: teacher " + a.shape().str() + " and student " + b.shape().str() +
                          " outputs differ in shape");
  }
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double d = static_cast<double>(a.values()[k]) - b.values()[k];
    s += d * d;
  }
  return a.size() == 0 ? 0.0 : s / static_cast<double>(a.size());
}

namespace {

Tensor gather(const Tensor& all, const std::vector<std::size_t>& idx) {
  Shape s = all.shape();
  s.n = static_cast<int>(idx.size());
  Tensor out(s);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    auto src = all.sample(static_cast<int>(idx[i]));
    std::copy(src.begin(), src.end(), out.sample(static_cast<int>(i)).begin());
  }
  return out;
}

}  // namespace

DistillResult distill(const AttackModel& teacher, const std::vector<LabeledImage>& data,
                      const DistillConfig& cfg, double threshold) {
  cfg.validate();
  if (data.empty()) throw InvalidArgument("distill: empty data");
  if (!(threshold > 0.0)) throw InvalidArgument("distill: threshold must be > 0");

  std::vector<Image> images;
  images.reserve(data.size());
  for (const auto& li : data) images.push_back(li.image);
  const Tensor X = to_tensor(std::span<const Image>(images));

  // Teacher targets, computed once.
  Tensor T = TeacherCloaker(teacher).raw_batch(X);
  const float t = static_cast<float>(threshold);
  for (float& v : T.values()) v = std::clamp(v, -t, t);

  StudentSpec ss = cfg.student;
  ss.channels = teacher.extractor().spec().channels;
  ss.size = teacher.extractor().spec().input_size;
  DistillResult result{Student(ss, cfg.seed), {}};
  Student& student = result.student;
  DistillReport& report = result.report;
  report.teacher_parameters = teacher.parameter_count();
  report.student_parameters = student.parameter_count();
  report.teacher_hash = teacher.weights_hash();

  const Tensor probe = student.infer(gather(X, {0}));
  if (!(probe.shape().sample_size() == T.shape().sample_size())) {
    throw InvalidArgument("distill: student output shape does not match the teacher");
  }

  std::vector<std::size_t> val_idx(std::min<std::size_t>(images.size(), static_cast<std::size_t>(cfg.validation_images)));
  std::iota(val_idx.begin(), val_idx.end(), std::size_t{0});
  const Tensor Xv = gather(X, val_idx);
  const Tensor Tv = gather(T, val_idx);

  nn::Adam opt(student.params(), {cfg.optimizer.lr, cfg.optimizer.beta1, cfg.optimizer.beta2, 1e-7});
  std::vector<std::size_t> order(images.size());
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    std::iota(order.begin(), order.end(), std::size_t{0});
    deterministic_shuffle(order, cfg.seed * 1000003ULL + static_cast<std::uint64_t>(epoch));
    double sum = 0.0;
    std::size_t seen = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      const std::vector<std::size_t> idx(order.begin() + static_cast<long>(start), order.begin() + static_cast<long>(end));
      const Tensor xb = gather(X, idx);
      const Tensor tb = gather(T, idx);
      const Tensor out = student.forward(xb, nn::Mode::kTrain);
      const double loss = perturbation_mse(out, tb);
      Tensor g(out.shape());
      const float scale = 2.0f / static_cast<float>(out.size());
      for (std::size_t k = 0; k < out.size(); ++k) g.values()[k] = scale * (out.values()[k] - tb.values()[k]);
      student.backward(g);
      opt.step();
      sum += loss * static_cast<double>(idx.size());
      seen += idx.size();
    }
    report.epoch_train_loss.push_back(sum / static_cast<double>(seen));
    report.epoch_validation_loss.push_back(perturbation_mse(student.infer(Xv), Tv));
    report.epoch_seconds.push_back(
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  }
  return result;
}

}  // namespace advcloak
