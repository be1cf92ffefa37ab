"""
Benchmark runner: repeat generate → train → score → evaluate over seeds.
"""

import concurrent.futures
import time
from dataclasses import replace

import numpy as np

import config
from data import generate
from logger import Color, RunLogger
from model import train
from scoring import auroc, extract_contributions, score_links


def run_single_trial(scm, trial, seed, navar_config, T=4000, N=5, K=2, density=0.3):
    """
    Run one full pipeline on freshly generated data.

    Args:
        scm (str): Generating system name.
        trial (int): Trial number.
        seed (int): Seed for both the data and the model.
        navar_config (NavarConfig): Hyperparameters (its seed is replaced).

    Returns:
        tuple: (trial, auroc)
    """
    dataset = generate(scm, T=T, seed=seed, N=N, K=K, density=density)
    model, _ = train(dataset, replace(navar_config, seed=seed))
    scores = score_links(extract_contributions(model, dataset))
    return trial, auroc(scores, dataset.truth, ignore_self_links=True).auroc


def run_benchmark(
        scm,
        trials,
        navar_config,
        seed_base=0,
        parallel=False,
        max_workers=config.MAX_WORKERS,
        logger=None,
        **generator_args,
):
    """
    Run ``trials`` pipelines with seeds seed_base, seed_base + 1, ...

    Failed trials are logged and counted; results are reduced in seed order.

    Returns:
        dict: Benchmark statistics including per-trial AUROCs.
    """
    logger = logger or RunLogger()
    logger.header(f"STARTING BENCHMARK ON {scm} WITH {trials} TRIALS", Color.BRIGHT_MAGENTA)
    start_time = time.time()
    results = {}
    failures = 0

    def handle_result(trial, fut):
        nonlocal failures
        try:
            _, value = fut if isinstance(fut, tuple) else fut.result()
            results[trial] = value
            logger.print(f"Trial {trial} completed. AUROC: {value:.6f}", Color.GREEN, bold=True)
        except Exception as e:
            failures += 1
            logger.log_trial_issue(scm, trial, type(e).__name__, str(e))

    if parallel and trials > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=max_workers) as executor:
            future_to_trial = {
                executor.submit(
                    run_single_trial, scm, t, seed_base + t, navar_config, **generator_args
                ): t
                for t in range(trials)
            }
            for future in concurrent.futures.as_completed(future_to_trial):
                handle_result(future_to_trial[future], future)
    else:
        for t in range(trials):
            try:
                res = run_single_trial(scm, t, seed_base + t, navar_config, **generator_args)
            except Exception as e:
                failures += 1
                logger.log_trial_issue(scm, t, type(e).__name__, str(e))
                continue
            handle_result(t, res)

    aurocs = [results[t] for t in sorted(results)]
    stats = {
        "scm": scm,
        "trials": trials,
        "completed_trials": len(aurocs),
        "failed_trials": failures,
        "aurocs": aurocs,
        "auroc_mean": float(np.mean(aurocs)) if aurocs else float("nan"),
        "auroc_std": float(np.std(aurocs)) if aurocs else float("nan"),
        "elapsed_time": time.time() - start_time,
    }
    logger.stats({k: v for k, v in stats.items() if k != "aurocs"}, title="BENCHMARK STATISTICS")
    return stats


def format_summary(stats):
    return f"AUROC mean={stats['auroc_mean']:.6f} std={stats['auroc_std']:.6f} trials={stats['completed_trials']}"
