"""Finite-difference gradient checks shared by the unit and acceptance suites.

Each case returns a GradCheckReport covering every parameter and, where the
layer has a differentiable input, the input itself (wrapped as a Parameter).
"""

import numpy as np

from clinmine.assertion import AssertionConfig, AssertionNetwork
from clinmine.ner import NerConfig, NerModel, NerNetwork, build_char_vocab, build_label_vocab
from clinmine.nn import BiLSTM, CharCNN, Dense, Dropout, Embedding, LSTM, Parameter, grad_check, softmax_xent

TOL = 1e-5


def _projected(layer_forward, layer_backward, params, x, seed=0, valid=None):
    """Loss = sum(R * out) for a fixed random R; optionally masked to valid rows."""
    rng = np.random.default_rng(seed + 100)
    xp = Parameter("input", x)
    R = None

    def fn(_):
        nonlocal R
        for p in params + [xp]:
            p.zero_grad()
        out = layer_forward(xp.value)
        if R is None:
            R = rng.standard_normal(out.shape)
            if valid is not None:
                R *= valid
        dx = layer_backward(R)
        if dx is not None:
            xp.grad += dx
        return float((R * out).sum())

    return grad_check(fn, params + [xp], None, tolerance=TOL)


def dense_case(seed=0):
    rng = np.random.default_rng(seed)
    layer = Dense(4, 3, rng)
    layer.b.value[:] = rng.standard_normal(3)
    return _projected(layer.forward, layer.backward, layer.params(), rng.standard_normal((2, 5, 4)))


def embedding_case(seed=0):
    rng = np.random.default_rng(seed)
    layer = Embedding(6, 3, rng)
    ids = np.array([[0, 2, 2], [5, 1, 0]])
    R = rng.standard_normal((2, 3, 3))

    def fn(_):
        layer.table.zero_grad()
        out = layer.forward(ids)
        layer.backward(R)
        return float((R * out).sum())

    return grad_check(fn, layer.params(), None, tolerance=TOL)


def dropout_case(seed=0):
    layer = Dropout(0.4)
    x = np.random.default_rng(seed).standard_normal((3, 5))

    def fwd(v):
        return layer.forward(v, np.random.default_rng(seed), True)  # same mask each call

    return _projected(fwd, layer.backward, [], x)


def char_cnn_case(seed=0, window=3):
    rng = np.random.default_rng(seed)
    layer = CharCNN(4, 5, window, rng)
    x = rng.standard_normal((3, 6, 4))
    lengths = np.array([6, 1, 4])
    return _projected(lambda v: layer.forward(v, lengths), layer.backward, layer.params(), x)


def lstm_case(seed=0):
    rng = np.random.default_rng(seed)
    layer = LSTM(3, 4, rng)
    layer.b.value[:] += 0.1 * rng.standard_normal(layer.b.value.shape)
    return _projected(layer.forward, layer.backward, layer.params(), rng.standard_normal((2, 4, 3)))


def bilstm_case(seed=0):
    rng = np.random.default_rng(seed)
    layer = BiLSTM(3, 4, rng)
    lengths = np.array([4, 2, 3])
    valid = (np.arange(4)[None, :] < lengths[:, None])[:, :, None]
    x = rng.standard_normal((3, 4, 3)) * valid
    return _projected(lambda v: layer.forward(v, lengths), layer.backward, layer.params(), x,
                      valid=valid)


def bilstm_final_states_case(seed=0):
    rng = np.random.default_rng(seed)
    layer = BiLSTM(3, 4, rng)
    lengths = np.array([4, 1, 3])
    x = rng.standard_normal((3, 4, 3))

    def fwd(v):
        return layer.final_states(layer.forward(v, lengths), lengths)

    def bwd(d):
        return layer.backward(layer.final_states_backward(d, lengths, 4))

    valid = (np.arange(4)[None, :] < lengths[:, None])[:, :, None]
    return _projected(fwd, bwd, layer.params(), x * valid)


def softmax_xent_case(seed=0):
    rng = np.random.default_rng(seed)
    logits = Parameter("logits", rng.standard_normal((5, 4)))
    targets = rng.integers(0, 4, 5)
    mask = np.array([1, 0, 1, 1, 0], dtype=bool)

    def fn(_):
        loss, d = softmax_xent(logits.value, targets, mask)
        logits.grad = d.copy()
        return loss

    return grad_check(fn, [logits], None, tolerance=TOL)


NER_MICRO = [
    (["patient", "took", "aspirin"], ["O", "O", "B-DRUG"]),
    (["severe", "fever", "noted", "today", "."], ["B-PROBLEM", "I-PROBLEM", "O", "O", "O"]),
    (["metformin", "XR"], ["B-DRUG", "I-DRUG"]),
]


def ner_network_case(seed=0, max_entries=None):
    rng = np.random.default_rng(seed)
    config = NerConfig(char_embedding_dim=4, char_filters=3, char_window=3, lstm_hidden=5, dropout=0.0)
    chars = build_char_vocab([t for t, _ in NER_MICRO])
    labels = build_label_vocab([g for _, g in NER_MICRO])
    net = NerNetwork(config, len(chars), len(labels), 6, rng)
    for p in net.params():
        if p.name.endswith(".b"):
            p.value[:] += 0.1 * rng.standard_normal(p.value.shape)
    model = NerModel(config, labels, chars, 6, net)
    vecs = [rng.standard_normal((len(t), 6)) for t, _ in NER_MICRO]
    batch = model.make_batch([t for t, _ in NER_MICRO], vecs, [g for _, g in NER_MICRO])
    return grad_check(lambda b: net.loss(b), net.params(), batch, tolerance=TOL, max_entries=max_entries,
                      seed=seed)


def assertion_network_case(seed=0):
    rng = np.random.default_rng(seed)
    config = AssertionConfig(lstm_hidden=4, flag_dim=3, dropout=0.0)
    net = AssertionNetwork(config, 5, 6, rng)
    words = rng.standard_normal((2, 7, 5))
    lengths = np.array([7, 4])
    words[1, 4:] = 0.0
    flags = np.array([[0, 0, 1, 1, 0, 0, 0], [0, 1, 0, 0, 0, 0, 0]])
    targets = np.array([1, 4])
    return grad_check(lambda _: net.loss(words, flags, lengths, targets), net.params(), None,
                      tolerance=TOL, seed=seed)


LAYER_CASES = {
    "dense": dense_case,
    "embedding": embedding_case,
    "dropout": dropout_case,
    "char_cnn": char_cnn_case,
    "lstm": lstm_case,
    "bilstm": bilstm_case,
    "bilstm_final_states": bilstm_final_states_case,
    "softmax_xent": softmax_xent_case,
}

NETWORK_CASES = {
    "ner_network": ner_network_case,
    "assertion_network": assertion_network_case,
}
