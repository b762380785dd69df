"""Library modules: Beta marginals, interval fitting, copulas, joint simulation, diagnostics, scenarios."""
