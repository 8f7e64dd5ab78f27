"""Hook-based key extraction from RoPE decoder models.

Pre-rotary keys are captured on each attention block's k_proj output; the
model's own rotary module is hooked for cos/sin so post-rotary keys are
reconstructed with exactly the rotation the model applied (Llama-family
half-split convention). No model surgery: hooks only, weights untouched.

Keys for grouped-query models are indexed by KV head. Token windows are
concatenated along the sequence axis, so one file per (layer, head, stage)
holds every processed token.
"""

import os
from dataclasses import dataclass, field

from .lkd import write_lkd


class ExportError(Exception):
    pass


class ModelLoadError(ExportError):
    """Model or tokenizer could not be loaded."""


class EmptyTextError(ExportError):
    """The text source produced no tokens."""


class ShapeMismatchError(ExportError):
    """Captured keys disagree with the model's declared head dimension."""


STAGES = ("pre", "post", "both")


@dataclass
class ExportConfig:
    model_id: str
    text_path: str
    out_dir: str
    max_tokens: int = 4096
    stage: str = "both"
    window: int = 512
    layers: list = field(default_factory=list)  # empty = all
    heads: list = field(default_factory=list)   # empty = all

    def __post_init__(self):
        if self.stage not in STAGES:
            raise ValueError(f"stage must be one of {STAGES}, got {self.stage!r}")
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be >= 1")
        if self.window < 1:
            raise ValueError("window must be >= 1")


def _load_model(model_id):
    import torch
    from transformers import AutoModelForCausalLM, AutoTokenizer

    try:
        tokenizer = AutoTokenizer.from_pretrained(model_id)
        model = AutoModelForCausalLM.from_pretrained(model_id, dtype=torch.float32)
    except Exception as exc:
        raise ModelLoadError(f"cannot load {model_id!r}: {exc}") from exc
    model.eval()
    return tokenizer, model


def _decoder_internals(model):
    """Locate the decoder stack, k_proj modules, and the rotary module."""
    inner = getattr(model, "model", None)
    layers = getattr(inner, "layers", None)
    rotary = getattr(inner, "rotary_emb", None)
    if inner is None or layers is None or rotary is None:
        raise ModelLoadError(
            "unsupported architecture: need model.model.layers[*].self_attn.k_proj "
            "and model.model.rotary_emb (Llama-family RoPE decoders)"
        )
    k_projs = []
    for i, layer in enumerate(layers):
        attn = getattr(layer, "self_attn", None)
        k_proj = getattr(attn, "k_proj", None)
        if k_proj is None:
            raise ModelLoadError(f"layer {i} has no self_attn.k_proj module")
        k_projs.append(k_proj)
    return k_projs, rotary


def _rotate_half(x):
    import torch

    half = x.shape[-1] // 2
    return torch.cat((-x[..., half:], x[..., :half]), dim=-1)


def export_keys(config: ExportConfig):
    """Run the model over the text and write one LKD1 file per
    (layer, head, stage). Returns the list of written paths."""
    import torch

    tokenizer, model = _load_model(config.model_id)

    try:
        with open(config.text_path, "r", encoding="utf-8") as f:
            text = f.read()
    except OSError as exc:
        raise EmptyTextError(f"cannot read text source: {exc}") from exc
    if not text.strip():
        raise EmptyTextError("text source is empty")
    ids = tokenizer(text, return_tensors="pt", add_special_tokens=False).input_ids[0]
    ids = ids[: config.max_tokens]
    if ids.numel() == 0:
        raise EmptyTextError("tokenizer produced no tokens")

    cfg = model.config
    n_kv = getattr(cfg, "num_key_value_heads", None) or cfg.num_attention_heads
    head_dim = getattr(cfg, "head_dim", None) or cfg.hidden_size // cfg.num_attention_heads
    k_projs, rotary = _decoder_internals(model)
    n_layers = len(k_projs)
    layer_sel = sorted(set(config.layers)) if config.layers else list(range(n_layers))
    head_sel = sorted(set(config.heads)) if config.heads else list(range(n_kv))
    for l in layer_sel:
        if not 0 <= l < n_layers:
            raise ValueError(f"layer {l} outside [0, {n_layers})")
    for h in head_sel:
        if not 0 <= h < n_kv:
            raise ValueError(f"head {h} outside [0, {n_kv})")

    captured_k = {}
    captured_rot = {}

    def k_hook(layer_idx):
        def hook(_module, _args, output):
            captured_k[layer_idx] = output.detach()
        return hook

    def rot_hook(_module, _args, output):
        captured_rot["cos"], captured_rot["sin"] = output[0].detach(), output[1].detach()

    handles = [k_projs[l].register_forward_hook(k_hook(l)) for l in layer_sel]
    handles.append(rotary.register_forward_hook(rot_hook))

    pre_chunks = {l: [] for l in layer_sel}
    post_chunks = {l: [] for l in layer_sel}
    want_pre = config.stage in ("pre", "both")
    want_post = config.stage in ("post", "both")
    try:
        with torch.no_grad():
            for start in range(0, ids.numel(), config.window):
                chunk = ids[start:start + config.window].unsqueeze(0)
                captured_k.clear()
                captured_rot.clear()
                model(chunk)
                t = chunk.shape[1]
                for l in layer_sel:
                    flat = captured_k[l]  # (1, T, n_kv * head_dim)
                    if flat.shape[-1] != n_kv * head_dim:
                        raise ShapeMismatchError(
                            f"layer {l}: k_proj width {flat.shape[-1]} != "
                            f"{n_kv} kv heads x head_dim {head_dim}"
                        )
                    pre = flat.view(1, t, n_kv, head_dim)
                    if want_pre:
                        pre_chunks[l].append(pre[0].clone())
                    if want_post:
                        cos, sin = captured_rot["cos"], captured_rot["sin"]
                        # same formula the model applies: k cos + rotate_half(k) sin
                        post = pre * cos[:, :, None, :] + _rotate_half(pre) * sin[:, :, None, :]
                        post_chunks[l].append(post[0])
    finally:
        for h in handles:
            h.remove()

    os.makedirs(config.out_dir, exist_ok=True)
    written = []
    for l in layer_sel:
        for stage, chunks in (("pre", pre_chunks), ("post", post_chunks)):
            if (stage == "pre" and not want_pre) or (stage == "post" and not want_post):
                continue
            stacked = torch.cat(chunks[l], dim=0)  # (S, n_kv, head_dim)
            for h in head_sel:
                path = os.path.join(config.out_dir, f"L{l}_H{h}_{stage}.lkd")
                write_lkd(path, stacked[:, h, :].numpy(), layer=l, head=h, rotary_stage=stage)
                written.append(path)
    return written
