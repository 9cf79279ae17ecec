#!/usr/bin/env python3
"""Train the prosody LM on sequences from a known Markov chain and track how
closely the teacher-forced loss approaches the chain's analytic conditional
entropy (the information-theoretic floor for next-code prediction)."""

import argparse
import time

import numpy as np
import torch

from prosotts.configs import PLLMConfig
from prosotts.pllm import ProsodyLM
from prosotts.synthetic import MarkovProsodyProcess


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--states", type=int, default=8)
    parser.add_argument("--steps", type=int, default=2000)
    parser.add_argument("--prompt-len", type=int, default=16)
    parser.add_argument("--target-len", type=int, default=24)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--eval-sequences", type=int, default=50)
    args = parser.parse_args()

    rng = np.random.default_rng(args.seed)
    process = MarkovProsodyProcess(args.states).materialize(rng)
    entropy = process.conditional_entropy()
    print(f"analytic conditional entropy: {entropy:.4f} nats")

    cfg = PLLMConfig(
        layers=2,
        heads=2,
        hidden=64,
        filter=128,
        kernel=3,
        codebook_size=args.states,
        content_dim=8,
        timbre_dim=8,
        max_positions=256,
        top_k=3,
    )
    torch.manual_seed(args.seed)
    lm = ProsodyLM(cfg)
    opt = lm.make_optimizer()

    prompt_content = torch.zeros(args.prompt_len, cfg.content_dim)
    target_content = torch.zeros(args.target_len, cfg.content_dim)
    timbre = torch.zeros(cfg.timbre_dim)

    def make_example(gen: np.random.Generator):
        states = process.sample_states(args.prompt_len + args.target_len, gen)
        prompt = torch.tensor(states[: args.prompt_len], dtype=torch.long)
        target = torch.tensor(states[args.prompt_len :], dtype=torch.long)
        return prompt, target

    t0 = time.time()
    recent: list[float] = []
    for step in range(1, args.steps + 1):
        prompt, target = make_example(rng)
        seq = lm.build_sequence(prompt, prompt_content, timbre, target_content)
        _, ce = lm.forward_teacher_forced(seq, target)
        opt.zero_grad()
        ce.backward()
        opt.step()
        recent.append(ce.detach().item())
        if step % 200 == 0:
            window = float(np.mean(recent[-100:]))
            print(
                f"step {step:5d}  train CE {window:.4f}  "
                f"gap {window - entropy:+.4f}  ({time.time() - t0:.0f}s)"
            )

    lm.eval()
    eval_rng = np.random.default_rng(args.seed + 10_000)
    with torch.no_grad():
        losses = []
        for _ in range(args.eval_sequences):
            prompt, target = make_example(eval_rng)
            seq = lm.build_sequence(prompt, prompt_content, timbre, target_content)
            _, ce = lm.forward_teacher_forced(seq, target)
            losses.append(ce.item())
    eval_ce = float(np.mean(losses))
    print(f"held-out CE {eval_ce:.4f}  gap {eval_ce - entropy:+.4f} nats")


if __name__ == "__main__":
    main()
