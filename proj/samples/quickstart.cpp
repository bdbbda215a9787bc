// Simulates one dataset from the just-identified homoskedastic design, with
// and without a violation of instrument validity, and runs the residual
// prediction test on both.

#include <cstdio>

#include "rpiv/rpiv.hpp"

int main() {
  using namespace rpiv;

  sim::SimSpec spec;
  spec.setting = sim::Setting::JustHom;
  spec.n = 400;
  spec.master_seed = 7;

  for (double t : {0.0, 1.0}) {
    spec.violation = t > 0.0 ? sim::Violation::ZSquared : sim::Violation::None;
    spec.strength = t;
    const AugmentedDataset ds = augment(sim::generate(spec, 0));

    TestConfig cfg;
    cfg.seed = 2024;
    const AggregateOutcome agg = run_aggregated(ds, cfg, 5);
    std::printf("violation t=%.1f  first split: N=%.3f sigma=%.3f p=%.4f  doubled-median p=%.4g\n", t,
                agg.per_split[0].numerator, agg.per_split[0].sigma_hat, agg.per_split[0].p_value, agg.aggregated_p);
  }
}
