"""
Shapley values by brute force
=============================

A three-player glove game, the weight table, and the integral that
turns those weights into something a quantum circuit can load.
"""
import numpy as np
from scipy import integrate

from qgshap.shapley import CooperativeGame, check_axioms, classical_shapley_all, shapley_weight

# player 0 owns a left glove, players 1 and 2 each own a right glove;
# a coalition is worth 1 if it can make a pair
game = CooperativeGame.from_function(3, lambda m: float(m & 1 and m & 6 != 0))
phi = classical_shapley_all(game)
print("glove game phi:", np.round(phi, 4))        # 2/3, 1/6, 1/6
print("axioms hold:", check_axioms(game, phi).passed)

# the weight of a size-r coalition depends only on r and n
n = 5
for r in range(n):
    w = shapley_weight(r, n)
    beta, _ = integrate.quad(lambda x: x ** r * (1 - x) ** (n - 1 - r), 0, 1)
    print(f"r={r}  w={w:.6f}  integral={beta:.6f}")

# efficiency: attributions sum to v(all) - v(empty), even when v(empty) != 0
rng = np.random.default_rng(0)
g = CooperativeGame(6, rng.uniform(size=64))
print("sum phi =", classical_shapley_all(g).sum(), " v(P) - v(0) =", g.values[-1] - g.values[0])
