"""Reduced-size overrides that exercise every experiment in seconds."""

SMOKE = {
    "chaos-identity": {"n_paths": 20_000},
    "d12-profile": {"n_paths": 5_000, "options": {"n_spectra": 50}},
    "lipschitz-rate": {"grid": {"n_steps": 256}, "n_paths": 2_000, "sweep": {"kmin": 3, "kmax": 5}},
    "holder-rate": {"grid": {"n_steps": 256}, "n_paths": 2_000, "sweep": {"kmin": 2, "kmax": 4}},
    "holder-lower-bound": {"grid": {"n_steps": 256}, "n_paths": 2_000, "sweep": {"kmin": 2, "kmax": 4}},
    "small-interval": {"grid": {"n_steps": 256}, "n_paths": 2_000, "sweep": {"kmin": 3, "kmax": 5}},
    "counterexample-blowup": {"grid": {"n_steps": 512}, "n_paths": 2_000},
    "besov-phi-alpha": {"grid": {"n_steps": 64}, "n_paths": 2_000, "sweep": {"kmin": 3, "kmax": 5}},
    "interpolation-functional": {"options": {"q": [1.0, 2.0]}},
    "bmo-fefferman": {"n_paths": 2_000, "options": {"n_fixtures": 3}},
    "gr-lemma": {"options": {"n_cases": 10}},
    "indicator-potential": {"grid": {"n_steps": 256}, "n_paths": 2_000, "sweep": {"kmin": 3, "kmax": 5}},
    "bsde-variation-cir": {"grid": {"n_steps": 64}, "n_paths": 2_000, "sweep": {"kmin": 3, "kmax": 5}},
    "bsde-coupling": {"grid": {"n_steps": 32}, "n_paths": 2_000, "options": {"kmin": 3, "kmax": 4}},
}


def smoke_config(name: str, seed: int = 11) -> dict:
    return {"experiment": name, "seed": seed, **SMOKE[name]}
