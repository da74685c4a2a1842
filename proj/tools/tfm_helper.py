#!/usr/bin/env python3
"""Inference helper hosting the real tabular foundation models.

Speaks newline-delimited JSON on stdin/stdout (one object per line):

    {"cmd":"hello"}                                   -> ok + version
    {"cmd":"fit","mode":"icl","features":..,"labels":..}
    {"cmd":"fit","mode":"finetune","features":..,"labels":..,"config":{..}}
    {"cmd":"predict","features":..}                   -> ok + proba
    {"cmd":"shutdown"}

Requires the official `tabpfn` (and/or `tabicl`) package plus a populated
checkpoint cache; pass --cache-dir or set TFMBENCH_CHECKPOINT_CACHE. Runs
offline once the cache holds the released checkpoints.
"""
import argparse
import json
import math
import os
import sys


def reply(obj):
    sys.stdout.write(json.dumps(obj) + "\n")
    sys.stdout.flush()


def fail(msg):
    reply({"ok": False, "error": str(msg)})


class TabPfnBackend:
    """ICL and fine-tuning over the released TabPFN v2 classifier."""

    # Parameter-group prefixes inside the released module. Freezing requests
    # use the group names x_encoder / y_encoder / transformer_blocks /
    # decoder and are mapped here.
    GROUP_PREFIXES = {
        "x_encoder": ("encoder",),
        "y_encoder": ("y_encoder",),
        "transformer_blocks": ("transformer_encoder", "layers"),
        "decoder": ("decoder",),
    }

    def __init__(self, cache_dir):
        try:
            from tabpfn import TabPFNClassifier  # noqa: F401
        except ImportError as e:
            raise RuntimeError(
                "the 'tabpfn' package is not installed; install the official "
                "release and populate the checkpoint cache") from e
        self.TabPFNClassifier = TabPFNClassifier
        self.cache_dir = cache_dir
        if cache_dir:
            os.environ.setdefault("TABPFN_MODEL_CACHE_DIR", cache_dir)
        self.clf = None
        self.version = self._version()

    def _version(self):
        import tabpfn
        return "tabpfn/" + getattr(tabpfn, "__version__", "unknown")

    def fit_icl(self, x, y):
        self.clf = self.TabPFNClassifier()
        self.clf.fit(x, y)
        return {}

    def fit_finetune(self, x, y, config):
        import numpy as np
        import torch

        lr = float(config.get("learning_rate", 1e-4))
        batch_size = int(config.get("batch_size", 32))
        tau = float(config.get("temperature", 1.0))
        frozen = set(config.get("frozen", []))
        max_steps = int(config.get("max_steps", 200))
        warmup = float(config.get("warmup_fraction", 0.1))
        min_patience = int(config.get("min_patience", 16))
        rho = float(config.get("patience_scale", 0.3))
        val_fraction = float(config.get("validation_fraction", 0.2))
        seed = int(config.get("seed", 0))
        weight_decay = float(config.get("weight_decay", 0.01))

        torch.manual_seed(seed)
        rng = np.random.default_rng(seed)
        x = np.asarray(x, dtype=np.float32)
        y = np.asarray(y, dtype=np.int64)

        # Stratified validation holdout for checkpoint selection.
        val_idx = []
        for cls in (0, 1):
            members = np.flatnonzero(y == cls)
            if len(members) < 2:
                raise RuntimeError(f"class {cls} has fewer than 2 samples")
            n_val = int(np.clip(round(val_fraction * len(members)), 1,
                                len(members) - 1))
            val_idx.extend(rng.permutation(members)[:n_val].tolist())
        val_mask = np.zeros(len(y), dtype=bool)
        val_mask[val_idx] = True
        pool_x, pool_y = x[~val_mask], y[~val_mask]
        val_x, val_y = x[val_mask], y[val_mask]

        self.clf = self.TabPFNClassifier(
            fit_mode="batched", differentiable_input=False)
        self.clf.fit(pool_x, pool_y)
        model = self.clf.model_

        def group_of(name):
            for group, prefixes in self.GROUP_PREFIXES.items():
                if any(name.startswith(p) or ("." + p + ".") in name
                       for p in prefixes):
                    return group
            return "transformer_blocks"

        for name, param in model.named_parameters():
            param.requires_grad_(group_of(name) not in frozen)
        trainable = [p for p in model.parameters() if p.requires_grad]

        optimizer = torch.optim.AdamW(trainable, lr=lr,
                                      weight_decay=weight_decay)
        scheduler = torch.optim.lr_scheduler.OneCycleLR(
            optimizer, max_lr=lr, total_steps=max_steps, pct_start=warmup,
            anneal_strategy="cos", div_factor=float(
                config.get("div_factor", 25.0)))

        def val_accuracy():
            probe = self.TabPFNClassifier()
            probe.model_ = model
            probe.fit(pool_x, pool_y)
            pred = probe.predict(val_x)
            return float((pred == val_y).mean())

        best = {"step": -1, "accuracy": -1.0, "state": None}
        history = []
        for step in range(max_steps):
            order = rng.permutation(len(pool_y))
            take = min(batch_size, max(1, len(pool_y) - 2))
            batch, ctx = order[:take], order[take:]
            if len(ctx) == 0 or len(set(pool_y[ctx])) < 2:
                ctx = order  # degenerate split: self-context
            logits = self._forward_logits(model, pool_x[ctx], pool_y[ctx],
                                          pool_x[batch])
            target = torch.tensor(pool_y[batch], dtype=torch.float32,
                                  device=logits.device)
            loss = torch.nn.functional.binary_cross_entropy_with_logits(
                logits / tau, target)
            if not math.isfinite(float(loss)):
                raise RuntimeError(f"non-finite loss at step {step}")
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            scheduler.step()

            acc = val_accuracy()
            history.append((step, acc))
            if acc > best["accuracy"]:
                best = {"step": step, "accuracy": acc,
                        "state": {k: v.detach().clone()
                                  for k, v in model.state_dict().items()}}
            best_step = best["step"]
            patience = max(min_patience, math.ceil(rho * best_step))
            if step - best_step >= patience:
                break

        if best["state"] is not None:
            model.load_state_dict(best["state"])
        self.clf = self.TabPFNClassifier()
        self.clf.model_ = model
        self.clf.fit(x, y)
        return {"best_step": best["step"],
                "validation_accuracy": best["accuracy"],
                "steps_run": len(history)}

    @staticmethod
    def _forward_logits(model, ctx_x, ctx_y, query_x):
        import torch
        # Single ICL forward pass: context rows with labels, query rows with
        # masked labels; returns positive-minus-negative class logits.
        xs = torch.tensor(
            list(ctx_x) + list(query_x), dtype=torch.float32).unsqueeze(1)
        ys = torch.tensor(list(ctx_y), dtype=torch.float32).unsqueeze(1)
        out = model(None, xs, ys)
        logits = out[len(ctx_y):, 0, :2]
        return logits[:, 1] - logits[:, 0]

    def predict(self, x):
        if self.clf is None:
            raise RuntimeError("predict before fit")
        proba = self.clf.predict_proba(x)
        return [float(p) for p in proba[:, 1]]


class TabIclBackend:
    """ICL only; fine-tuning is out of scope for this backend."""

    def __init__(self, cache_dir):
        try:
            from tabicl import TabICLClassifier  # noqa: F401
        except ImportError as e:
            raise RuntimeError(
                "the 'tabicl' package is not installed; install the official "
                "release and populate the checkpoint cache") from e
        self.TabICLClassifier = TabICLClassifier
        self.cache_dir = cache_dir
        self.clf = None
        self.version = self._version()

    def _version(self):
        import tabicl
        return "tabicl/" + getattr(tabicl, "__version__", "unknown")

    def fit_icl(self, x, y):
        kwargs = {}
        if self.cache_dir:
            kwargs["model_path"] = self.cache_dir
        try:
            self.clf = self.TabICLClassifier(**kwargs)
        except TypeError:
            self.clf = self.TabICLClassifier()
        self.clf.fit(x, y)
        return {}

    def fit_finetune(self, *_args, **_kwargs):
        raise RuntimeError("tabicl does not support fine-tuning")

    def predict(self, x):
        if self.clf is None:
            raise RuntimeError("predict before fit")
        proba = self.clf.predict_proba(x)
        return [float(p) for p in proba[:, 1]]


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--backend", required=True,
                        choices=["tabpfn", "tabicl"])
    parser.add_argument("--cache-dir",
                        default=os.environ.get("TFMBENCH_CHECKPOINT_CACHE",
                                               ""))
    args = parser.parse_args()

    backend = None
    for line in sys.stdin:
        line = line.strip()
        if not line:
            continue
        try:
            req = json.loads(line)
        except json.JSONDecodeError as e:
            fail(f"malformed request: {e}")
            continue
        cmd = req.get("cmd")
        try:
            if cmd == "hello":
                if backend is None:
                    backend = (TabPfnBackend if args.backend == "tabpfn"
                               else TabIclBackend)(args.cache_dir)
                reply({"ok": True, "backend": args.backend,
                       "version": backend.version})
            elif cmd == "fit":
                if backend is None:
                    raise RuntimeError("hello first")
                if req.get("mode", "icl") == "finetune":
                    info = backend.fit_finetune(req["features"],
                                                req["labels"],
                                                req.get("config", {}))
                else:
                    info = backend.fit_icl(req["features"], req["labels"])
                reply({"ok": True, **(info or {})})
            elif cmd == "predict":
                if backend is None:
                    raise RuntimeError("hello first")
                reply({"ok": True, "proba": backend.predict(req["features"])})
            elif cmd == "shutdown":
                reply({"ok": True})
                return
            else:
                fail(f"unknown command {cmd!r}")
        except Exception as e:  # surface everything to the C++ side
            fail(e)


if __name__ == "__main__":
    main()
