"""Regenerate the gate sets shipped in src/umcsim/data/."""
from pathlib import Path

from umcsim import gateset

ONE_QUBIT = ("rx90", "rx180", "ry90", "ry180", "ry-90", "idle")
OUT = Path(__file__).resolve().parents[1] / "src" / "umcsim" / "data"


def main():
    names = ONE_QUBIT + ("cz",)
    targets = {n: n for n in names}
    gateset.ideal_gateset(names).save(OUT / "ideal.json")

    inf = {n: 1 - 0.9996 for n in ONE_QUBIT} | {"cz": 1 - 0.9266}
    paper_like = gateset.synthesize_noisy_gateset(targets, inf, seed=2024, spam={"prep": 0.9296, "meas": 0.9603})
    paper_like.metadata["source"] = "synthetic, fidelity-matched to the published GST values"
    paper_like.save(OUT / "paper_like.json")

    inf = {n: 1e-4 for n in ONE_QUBIT} | {"cz": 1e-3}
    high = gateset.synthesize_noisy_gateset(targets, inf, seed=7, spam={"prep": 0.999, "meas": 0.999})
    high.metadata["source"] = "synthetic high-fidelity set for threshold sweeps"
    high.save(OUT / "high_fidelity.json")


if __name__ == "__main__":
    main()
