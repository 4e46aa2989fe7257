#pragma once

#include <cstdint>
#include <string>

#include "bks/param_store.hpp"

namespace bks {

enum class LrSchedule { cosine, constant };

std::string to_string(LrSchedule s);
LrSchedule parse_schedule(const std::string& s);

struct OptimizerConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.99;
  double eps = 1e-8;
  LrSchedule schedule = LrSchedule::cosine;
  std::int64_t total_iters = 2000;

  void validate() const;
  // Cosine annealing from lr at step 0 to 0 at total_iters.
  double learning_rate(std::int64_t step) const;

  friend bool operator==(const OptimizerConfig&, const OptimizerConfig&) = default;
};

class Adam {
 public:
  Adam(const ParamStore& layout, OptimizerConfig cfg);

  // One update using the learning rate of the current step count.
  void step(ParamStore& params, const ParamStore& grads);
  void reset();

  std::int64_t steps() const { return steps_; }
  const OptimizerConfig& config() const { return cfg_; }

  // Moment estimates, exposed for checkpointing.
  ParamStore& first_moment() { return m_; }
  ParamStore& second_moment() { return v_; }
  const ParamStore& first_moment() const { return m_; }
  const ParamStore& second_moment() const { return v_; }
  void set_steps(std::int64_t s) { steps_ = s; }

 private:
  OptimizerConfig cfg_;
  ParamStore m_;
  ParamStore v_;
  std::int64_t steps_ = 0;
};

}  // namespace bks
