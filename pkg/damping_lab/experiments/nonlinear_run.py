#
# Copyright Elasticsearch B.V. and/or licensed to Elasticsearch B.V. under one
# or more contributor license agreements. Licensed under the Elastic License 2.0;
# you may not use this file except in compliance with the Elastic License 2.0.
#
from damping_lab.channel_spectral import write_field
from damping_lab.experiments.base import BaseExperiment
from damping_lab.logger import logger
from damping_lab.nonlinear_lab import (
    DEFAULT_CADENCE,
    DEFAULT_CFL,
    DEFAULT_EPS,
    DEFAULT_T_END,
    SimConfig,
    mean_flow_monitor,
    run,
    write_diagnostics_csv,
)
from damping_lab.profile_diagnostics import (
    DEFAULT_SCALING_TIME,
    ProfileTracker,
    amplitude_scaling,
    bootstrap_monitor,
    kernel_decay_audit,
    stronger_bound_exponents,
    write_energy_csv,
)
from damping_lab.weights import WeightEvaluator

KERNEL_WAVENUMBERS = (1, 2)


class NonlinearRunExperiment(BaseExperiment):
    """Full Euler run with the coordinate and energy diagnostics at every
    output time.

    Amplitudes listed in `nonlinear.eps_values` are rerun without field
    dumps to measure how the energies scale with eps.
    """

    name = "nonlinear-run"

    def sim_config(self, eps=None):
        section = self.settings["nonlinear"]
        rerun = eps is not None
        if eps is None:
            eps = section.get("eps", DEFAULT_EPS)
        return SimConfig(
            self.profile(),
            self.grid(),
            eps=float(eps),
            t_end=float(section.get("t_end", DEFAULT_T_END)),
            cfl=float(section.get("cfl", DEFAULT_CFL)),
            cadence=float(section.get("cadence", DEFAULT_CADENCE)),
            snapshot_every=0 if rerun else int(section.get("snapshot_every", 0)),
            output_dir=None if rerun else self.output_dir,
        )

    def simulate(self):
        config = self.sim_config()
        result = run(config)
        write_diagnostics_csv(self.path("diagnostics.csv"), result)
        write_field(self.path("fields", "omega_final.bin"), result.final.omega)
        conservation = result.conservation()
        logger.info(f"Vorticity drift {conservation:.3e} over {len(result.rows)} outputs")
        self.verdict("support", not result.support_violations)
        self.verdict("conservation", self.below("conservation", conservation))
        return config, result

    def track(self, config, result):
        params = self.weight_params()
        tracker = ProfileTracker(config.profile, WeightEvaluator(params), params.big_k)
        for snapshot in result.snapshots:
            tracker.update(snapshot)
        return tracker

    def amplitude_study(self, config, reports):
        section = self.settings["nonlinear"]
        series = {config.eps: reports}
        for eps in section.get("eps_values") or []:
            eps = float(eps)
            if eps in series:
                continue
            logger.info(f"Rerunning with eps={eps} for the amplitude scaling")
            other = self.sim_config(eps)
            series[eps] = self.track(other, run(other)).reports
        exponents = stronger_bound_exponents(series)
        at = float(section.get("scaling_time", DEFAULT_SCALING_TIME))
        scaling = amplitude_scaling(series, at=at)
        if exponents["F"] is not None:
            self.verdict("strong_exponent", self.within("strong_exponent", exponents["F"]))
        if scaling is not None and scaling["relative"] is not None:
            self.verdict("energy_ratio", self.within("energy_ratio", scaling["relative"]))
        return {"eps": sorted(series), "exponents": exponents, "scaling": scaling}

    def _run(self):
        config, result = self.simulate()
        tracker = self.track(config, result)
        write_energy_csv(self.path("energies.csv"), tracker.reports)

        identity = max(check["identity_residual"] for check in tracker.checks)
        vpp = max(check["vpp_residual"] for check in tracker.checks)
        roundtrip = max(check["roundtrip_residual"] for check in tracker.checks)
        self.verdict("identity_residual", self.below("identity_residual", identity))
        self.verdict("vpp_residual", self.below("vpp_residual", vpp))
        self.verdict("roundtrip", self.below("roundtrip_residual", roundtrip))
        bootstrap = bootstrap_monitor(tracker.reports, config.eps)
        self.verdict("bootstrap", bootstrap["passed"])
        self.verdict("h_decay", bootstrap["h_decay"]["bounded"])
        if bootstrap["h_decay"]["slope"] is not None:
            self.verdict(
                "h_decay_slope", self.below("h_decay_slope", bootstrap["h_decay"]["slope"])
            )
        mean_flow = mean_flow_monitor(result.snapshots, config.profile.theta0)
        self.verdict("mean_flow", mean_flow["passed"])
        kernels = [kernel_decay_audit(config.profile, k=k) for k in KERNEL_WAVENUMBERS]
        self.verdict("kernel_decay", all(audit["decaying"] for audit in kernels))
        return {
            "config": config.to_dict(),
            "dt": result.dt,
            "conservation": result.conservation(),
            "support_violations": result.support_violations,
            "checks": tracker.checks,
            "max_identity_residual": identity,
            "max_vpp_residual": vpp,
            "max_roundtrip_residual": roundtrip,
            "bootstrap": bootstrap,
            "mean_flow": mean_flow,
            "kernels": kernels,
            "amplitudes": self.amplitude_study(config, tracker.reports),
            "energies": [report.to_dict() for report in tracker.reports],
        }
