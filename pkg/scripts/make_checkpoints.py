"""Regenerate the shipped checkpoints (takes a few minutes)."""

from pathlib import Path

from fieldedit.fields import Sphere, save_checkpoint
from fieldedit.training import FitConfig, fit_sdf

OUT = Path(__file__).resolve().parents[1] / "checkpoints"


def main():
    OUT.mkdir(exist_ok=True)
    field = fit_sdf(Sphere(1.0), FitConfig(iterations=8000, w_normal=0.3, seed=0))
    save_checkpoint(field, OUT / "sphere.json")
    print("wrote", OUT / "sphere.json")


if __name__ == "__main__":
    main()
