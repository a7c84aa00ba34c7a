"""Random register histories for checker tests."""
import random

from larksim.lincheck import INF, READ, WRITE, Op


def random_history(rng: random.Random, n_ops: int, clients: int = 3, corrupt: float = 0.3,
                   unknown: float = 0.15):
    """Simulate a register with overlapping ops, then optionally corrupt some reads."""
    ops = []
    value = None
    t = 0.0
    next_free = [0.0] * clients
    for i in range(n_ops):
        c = rng.randrange(clients)
        start = max(next_free[c], t + rng.random())
        t = start
        dur = rng.uniform(0.5, 4.0)
        point = start + rng.random() * dur
        if rng.random() < 0.5:
            value = i + 1
            resp = INF if rng.random() < unknown else start + dur
            ops.append((point, Op(i, WRITE, value, start, resp, c)))
        else:
            ops.append((point, Op(i, READ, None, start, start + dur, c)))
        next_free[c] = start + dur if ops[-1][1].respond != INF else INF
        if next_free[c] == INF:
            next_free[c] = start + dur
    # assign read values from the linearization points
    ops.sort(key=lambda x: x[0])
    cur = None
    out = []
    for point, op in ops:
        if op.kind == WRITE:
            cur = op.value
            out.append(op)
        else:
            v = cur
            if rng.random() < corrupt:
                v = rng.choice([None] + [o.value for _, o in ops if o.kind == WRITE] or [None])
            out.append(Op(op.id, READ, v, op.invoke, op.respond, op.client))
    out.sort(key=lambda o: o.id)
    return out
