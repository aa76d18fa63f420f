#
# Copyright Elasticsearch B.V. and/or licensed to Elasticsearch B.V. under one
# or more contributor license agreements. Licensed under the Elastic License 2.0;
# you may not use this file except in compliance with the Elastic License 2.0.
#
from damping_lab.experiments.base import BaseExperiment
from damping_lab.weights import TEST_DELTA, audit_comparison_lemmas

# structure checks that hold at the test scale; the exp(-delta sqrt|xi|)
# floor only holds once delta is small
TEST_SCALE_CHECKS = (
    "b_R_below_b_k",
    "b_k_below_b_NR",
    "b_NR_below_one",
    "sandwich_lower_NR",
    "A_NR_below_A_R",
    "sandwich_lower_k",
)


class WeightsAuditExperiment(BaseExperiment):
    """Comparison-lemma constants at the test-scale delta."""

    name = "weights-audit"

    def _run(self):
        section = self.settings["weights"]
        params = self.weight_params(delta=section.get("test_delta", TEST_DELTA))
        physical = self.weight_params()
        result = audit_comparison_lemmas(
            params=params,
            samples=int(section.get("samples", 10_000)),
            seed=self.seed,
            max_frequency=float(section.get("max_frequency", 1e5)),
            small_delta=physical.delta,
        )
        self.verdict("comparison_lemmas", result["passed"])
        self.verdict("mu_R_floor", result["mu_R_floor"]["held"])
        checks = result["structure"]["test_scale"]["checks"]
        self.verdict("test_scale_ordering", all(checks[name]["held"] for name in TEST_SCALE_CHECKS))
        small = result["structure"]["small"]["checks"]
        self.verdict(
            "small_delta_chain",
            all(check["held"] for name, check in small.items() if not name.startswith("A_")),
        )
        return {"audit": result}
