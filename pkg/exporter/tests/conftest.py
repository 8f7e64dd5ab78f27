"""Builds a tiny random-weight Llama-style model with a character-level
tokenizer, saved locally so tests run fully offline."""

import pytest

SAMPLE_TEXT = (
    "The quick brown fox jumps over the lazy dog while seventeen owls "
    "watch from a wire. Attention caches grow one token at a time, and "
    "most of what they store is never looked at again. "
) * 6

HIDDEN = 64
LAYERS = 2
HEADS = 2
HEAD_DIM = HIDDEN // HEADS


@pytest.fixture(scope="session")
def tiny_model_dir(tmp_path_factory):
    import torch
    from tokenizers import Tokenizer
    from tokenizers.models import BPE
    from transformers import LlamaConfig, LlamaForCausalLM, PreTrainedTokenizerFast

    out = tmp_path_factory.mktemp("tiny-llama")

    # merge-free BPE over the text's alphabet = character-level tokens
    chars = sorted(set(SAMPLE_TEXT))
    vocab = {ch: i for i, ch in enumerate(chars)}
    vocab["<unk>"] = len(vocab)
    tok = Tokenizer(BPE(vocab=vocab, merges=[], unk_token="<unk>"))
    fast = PreTrainedTokenizerFast(tokenizer_object=tok, unk_token="<unk>")
    fast.save_pretrained(out)

    torch.manual_seed(1234)
    config = LlamaConfig(
        hidden_size=HIDDEN,
        intermediate_size=2 * HIDDEN,
        num_hidden_layers=LAYERS,
        num_attention_heads=HEADS,
        num_key_value_heads=HEADS,
        vocab_size=len(vocab) + 1,
        max_position_embeddings=2048,
    )
    LlamaForCausalLM(config).save_pretrained(out)
    return str(out)


@pytest.fixture(scope="session")
def text_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("text") / "sample.txt"
    path.write_text(SAMPLE_TEXT, encoding="utf-8")
    return str(path)
