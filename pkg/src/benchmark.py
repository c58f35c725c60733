import argparse
import logging
import time

import pandas as pd

from errors import SphereMixError
from objective.config import MixLossConfig
from service.synth import SynthConfig, synth_bipartite
from training.trainer import TrainConfig, train

logging.basicConfig(level=logging.INFO, format="%(asctime)s - %(levelname)s - %(message)s")
logger = logging.getLogger(__name__)

METHODS = {
    "plain": MixLossConfig.plain(),
    "m3mix": MixLossConfig(),
}


def run_benchmark(seeds=(0, 1, 2, 3, 4), epochs=30, M=256, d=32, out_csv="benchmark_results.csv"):
    """
    Paired plain-vs-m3mix training on the synthetic two-cluster set, one pair of runs per seed.
    """
    logger.info(f"Benchmark: {len(seeds)} seeds, {epochs} epochs, M={M}, d={d}")
    results = []

    for seed in seeds:
        data = synth_bipartite(SynthConfig(M=M, d=d, seed=seed))
        finals = {}

        for method, loss in METHODS.items():
            start_time = time.time()
            cfg = TrainConfig(epochs=epochs, batch_size=128, loss=loss, seed=seed)
            try:
                _, history = train(data, cfg)
            except SphereMixError as e:
                logger.error(f"Run failed (seed {seed}, {method}): {e}")
                continue

            first, last = history[0], history[-1]
            finals[method] = last
            results.append(
                {
                    "seed": seed,
                    "method": method,
                    "uniformity": last.uniformity,
                    "relative_alignment": last.relative_alignment,
                    "clip_loss_first": first.loss_clip,
                    "clip_loss_last": last.loss_clip,
                    "modality_gap_norm": last.modality_gap_norm,
                    "duration": f"{time.time() - start_time:.2f}s",
                }
            )
            logger.info(f"seed {seed} {method}: uniformity {last.uniformity:.4f}, alignment {last.relative_alignment:.4f}")

        if len(finals) == 2:
            win = (
                finals["m3mix"].uniformity > finals["plain"].uniformity
                and finals["m3mix"].relative_alignment > finals["plain"].relative_alignment
            )
            for row in results[-2:]:
                row["m3mix_wins"] = win

    results_df = pd.DataFrame(results)
    print(results_df)
    results_df.to_csv(out_csv, index=False)
    logger.info(f"Results written to {out_csv}")
    return results_df


if __name__ == "__main__":
    parser = argparse.ArgumentParser(description="Paired plain vs m3mix training benchmark")
    parser.add_argument("--seeds", type=int, default=5)
    parser.add_argument("--epochs", type=int, default=30)
    args = parser.parse_args()
    run_benchmark(seeds=tuple(range(args.seeds)), epochs=args.epochs)
