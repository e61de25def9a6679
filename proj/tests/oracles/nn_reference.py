"""Reference values for tests/test_nn.cpp, computed with JAX in float64.

The network is written out independently of the C++ code: input
[x; emb(t); emb(t - r)], emb(s) = [sin(w s); cos(w s)], hidden layers with the
chosen activation, linear output. Parameters follow a closed-form pattern so
both sides can build them without sharing an RNG.
"""
import jax
import jax.numpy as jnp

jax.config.update("jax_enable_x64", True)

FREQS = jnp.array([1.0, 32.0])  # geometric(4, 1, 32)
WIDTHS = [10, 5, 5, 5, 2]


def params():
    ws, bs = [], []
    for l in range(len(WIDTHS) - 1):
        i = jnp.arange(WIDTHS[l + 1])[:, None]
        j = jnp.arange(WIDTHS[l])[None, :]
        ws.append(0.35 * jnp.sin(0.9 * i + 1.7 * j + 0.6 * l + 0.3))
        bs.append(0.1 * jnp.cos(1.1 * jnp.arange(WIDTHS[l + 1]) + 0.4 * l))
    return ws, bs


def emb(s):
    return jnp.concatenate([jnp.sin(FREQS * s), jnp.cos(FREQS * s)])


ACT = {
    "tanh": jnp.tanh,
    "silu": lambda z: z * jax.nn.sigmoid(z),
    "relu": lambda z: jnp.maximum(z, 0.0),
}


def forward(p, x, t, r, act):
    ws, bs = p
    a = jnp.concatenate([x, emb(t), emb(t - r)])
    for l in range(len(ws)):
        a = ws[l] @ a + bs[l]
        if l + 1 < len(ws):
            a = ACT[act](a)
    return a


def main():
    p = params()
    x = jnp.array([0.3, -0.1])
    t, r = 0.7, 0.2
    dx, dt, dr = jnp.array([0.5, 1.2]), 0.3, -0.4
    for act in ACT:
        u = forward(p, x, t, r, act)
        _, tan = jax.jvp(lambda xx, tt, rr: forward(p, xx, tt, rr, act), (x, t, r), (dx, dt, dr))
        print(act, "forward", [f"{v:.17g}" for v in u])
        print(act, "jvp", [f"{v:.17g}" for v in tan])

    xs = jnp.array([[0.3, -0.1], [1.2, 0.4], [-0.7, 0.9]])
    ts = jnp.array([0.7, 1.0, 0.25])
    rs = jnp.array([0.2, 0.0, 0.25])
    ys = jnp.array([[0.1, 0.2], [-0.3, 0.5], [0.0, -1.0]])

    def loss(pp):
        us = jnp.stack([forward(pp, xs[b], ts[b], rs[b], "tanh") for b in range(3)])
        return jnp.mean(jnp.sum((us - ys) ** 2, axis=1))

    val, g = jax.value_and_grad(loss)(p)
    print("loss", f"{val:.17g}")
    for l in range(len(g[0])):
        print("grad W", l, f"{float(jnp.sum(g[0][l] ** 2)):.17g}", f"{float(g[0][l][1, 2]):.17g}")
        print("grad b", l, f"{float(jnp.sum(g[1][l] ** 2)):.17g}", f"{float(g[1][l][0]):.17g}")


if __name__ == "__main__":
    main()
