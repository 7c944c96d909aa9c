// Plan on offline contexts, sample online, fit and evaluate, on the synthetic instance.

#include <iostream>
#include <vector>

#include "nonreactive.hpp"

int main() {
  using namespace nonreactive;
  const BanditInstance inst = make_synthetic(7);
  Rng offline_rng(1), online_rng(2), eval_rng(3);

  std::vector<Context> offline(2000);
  for (auto& c : offline) c = inst.draw_context(offline_rng);
  const PlanResult planned = plan(offline, PlannerConfig{1.0, 1.0});
  std::cout << "planner phases: " << planned.policy.num_phases() << '\n';

  const InteractionDataset data = sample(planned.policy, inst, 2000, online_rng);
  const RidgeEstimate est = ridge_fit(data, 1.0);

  std::vector<Context> eval(2000);
  for (auto& c : eval) c = inst.draw_context(eval_rng);
  const EvaluationReport rep = evaluate(est, inst, eval);
  std::cout << "policy value " << rep.policy_value << ", suboptimality " << rep.expected_suboptimality
            << ", max uncertainty " << rep.expected_max_uncertainty << '\n';
}
