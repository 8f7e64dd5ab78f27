"""Regenerate the checked-in binary fixtures and the golden run output.

The golden TSV comes from an inline float64 oracle of the reduced-rank
top-k pipeline, not from the package's attention code. Run from the repo
root:

    python tests/fixtures/make_fixtures.py
"""

import os

import numpy as np

from lokiattn.calibration import ProjectionSet
from lokiattn.dataio import KeyDumpHeader, write_key_dump, write_projection

HERE = os.path.dirname(os.path.abspath(__file__))

# hand instance: axis-aligned keys with distinct magnitudes so every ranking
# is unambiguous for the chosen queries
KEYS = np.array(
    [
        [4.0, 0.0, 0.0, 0.0],
        [0.0, 3.0, 0.0, 0.0],
        [0.0, 0.0, 2.0, 0.0],
        [0.25, 0.25, 0.25, 1.0],
    ],
    dtype=np.float32,
)
VALUES = np.array(
    [
        [1.0, 0.0, 0.0, 0.0],
        [0.0, 2.0, 0.0, 0.0],
        [0.0, 0.0, 3.0, 0.0],
        [0.0, 0.0, 0.0, 4.0],
    ],
    dtype=np.float32,
)
QUERIES = np.array(
    [
        [1.0, 0.5, 0.25, 0.125],
        [0.1, 0.2, 1.5, -0.75],
    ],
    dtype=np.float32,
)

# exactly orthogonal pairwise rotation (3-4-5 triangle), eigenvalues by hand
C, S = 0.6, 0.8
P = np.array(
    [
        [C, -S, 0.0, 0.0],
        [S, C, 0.0, 0.0],
        [0.0, 0.0, C, -S],
        [0.0, 0.0, S, C],
    ],
    dtype=np.float32,
)
EIGENVALUES = np.array([0.4, 0.3, 0.2, 0.1], dtype=np.float32)

# small parse-stability fixture with hand-picked values
TINY_KEYS = np.array([[1.0, -2.5, 0.5], [3.25, 0.0, -1.125]], dtype=np.float32)


def loki_oracle(q, keys, values, p, d, k):
    """Float64 reference of the reduced-rank top-k attention step."""
    q = q.astype(np.float64)
    keys = keys.astype(np.float64)
    p64 = p.astype(np.float64)
    q_hat = q @ p64
    k_hat = keys @ p64
    approx = k_hat[:, :d] @ q_hat[:d]
    order = sorted(range(len(approx)), key=lambda i: (-approx[i], i))
    idx = np.array(sorted(order[:k]))
    logits = k_hat[idx] @ q_hat / np.sqrt(keys.shape[1])
    e = np.exp(logits - logits.max())
    w = e / e.sum()
    return w @ values[idx].astype(np.float64), idx


def main():
    write_key_dump(
        os.path.join(HERE, "hand4_keys.lkd"),
        KeyDumpHeader(layer=0, head=0, seq_len=4, head_dim=4, rotary_stage="post"),
        KEYS,
    )
    write_key_dump(
        os.path.join(HERE, "hand4_values.lkd"),
        KeyDumpHeader(layer=0, head=0, seq_len=4, head_dim=4, rotary_stage="post"),
        VALUES,
    )
    write_key_dump(
        os.path.join(HERE, "hand4_queries.lkd"),
        KeyDumpHeader(layer=0, head=0, seq_len=2, head_dim=4, rotary_stage="post"),
        QUERIES,
    )
    write_projection(
        os.path.join(HERE, "hand4_proj.lkp"),
        ProjectionSet(layer=0, head=0, P=P, eigenvalues=EIGENVALUES, rotary_stage="post"),
    )
    write_key_dump(
        os.path.join(HERE, "tiny.lkd"),
        KeyDumpHeader(layer=1, head=2, seq_len=2, head_dim=3, rotary_stage="pre"),
        TINY_KEYS,
    )

    # golden outputs for: run --method loki --kf 0.5 --df 0.5 (d=2, k=2)
    lines = ["query\t" + "\t".join(f"y{i}" for i in range(4))]
    idx_lines = ["query\tindices"]
    for qi, q in enumerate(QUERIES):
        y, idx = loki_oracle(q, KEYS, VALUES, P, d=2, k=2)
        lines.append(str(qi) + "\t" + "\t".join(f"{x:.12g}" for x in y))
        idx_lines.append(f"{qi}\t" + " ".join(str(int(i)) for i in idx))
    with open(os.path.join(HERE, "hand4_expected.tsv"), "w", encoding="utf-8") as f:
        f.write("\n".join(lines) + "\n")
    with open(os.path.join(HERE, "hand4_expected_indices.tsv"), "w", encoding="utf-8") as f:
        f.write("\n".join(idx_lines) + "\n")
    print("fixtures written to", HERE)


if __name__ == "__main__":
    main()
