import numpy as np
import pytest

from oracles import global_commutator_oracle, global_conjugation_oracle

from dqnn.linalg import (
    basis_state,
    expm_i_hermitian,
    fidelity_pure,
    haar_random_state,
    haar_random_unitary,
    split_rng,
    unitarity_error,
    zero_projector,
)
from dqnn.network import Network, Perceptron, build_cache
from dqnn.training import (
    Dataset,
    TrainingConfig,
    analytic_cost_derivative,
    commutator_matrix_M,
    cost,
    gradient_norm_probe,
    parameter_matrix_K,
    train,
    training_step,
)


def random_dataset(n, d_in, d_out, rng):
    ins = np.array([haar_random_state(d_in, rng) for _ in range(n)])
    outs = np.array([haar_random_state(d_out, rng) for _ in range(n)])
    return Dataset(ins, outs)


def unitary_dataset(n, m, rng):
    """Pairs (|phi>, V|phi>) for a Haar target V."""
    v = haar_random_unitary(1 << m, rng)
    ins = np.array([haar_random_state(1 << m, rng) for _ in range(n)])
    return Dataset(ins, ins @ v.T)


def stepped_cost(net, k_matrices, eps, data):
    """Cost after moving every perceptron along its K by eps."""
    layers = []
    for k, layer in enumerate(net.layers):
        layers.append(
            tuple(
                Perceptron(expm_i_hermitian(k_matrices[k][j], eps) @ p.unitary, p.targets)
                for j, p in enumerate(layer)
            )
        )
    return cost(Network(net.widths, layers, validate=False), data)


def all_k_matrices(net, data, eta):
    caches = [build_cache(net, data.inputs[i], data.outputs[i]) for i in range(len(data))]
    return [
        [parameter_matrix_K(net, k, j, caches, eta) for j in range(len(net.layers[k]))]
        for k in range(net.transition_count)
    ]


# ---------------------------------------------------------------------------
# dataset / config plumbing
# ---------------------------------------------------------------------------

def test_dataset_validation_and_slicing():
    rng = np.random.default_rng(0)
    data = random_dataset(4, 4, 4, rng)
    assert len(data) == 4
    assert not data.corrupted.any()
    assert len(data.take(2)) == 2
    with pytest.raises(ValueError):
        Dataset(data.inputs, data.outputs[:2])
    with pytest.raises(ValueError):
        Dataset(data.inputs, data.outputs, corrupted=np.zeros(3, dtype=bool))
    flagged = Dataset(data.inputs, data.outputs, corrupted=np.array([1, 0, 1, 0], dtype=bool))
    assert len(flagged.good_pairs()) == 2


def test_config_validation():
    TrainingConfig(epsilon=0.0, eta=1.0, rounds=0)
    with pytest.raises(ValueError):
        TrainingConfig(epsilon=-0.1, eta=1.0, rounds=1)
    with pytest.raises(ValueError):
        TrainingConfig(epsilon=0.1, eta=0.0, rounds=1)
    with pytest.raises(ValueError):
        TrainingConfig(epsilon=0.1, eta=1.0, rounds=-1)


# ---------------------------------------------------------------------------
# cost
# ---------------------------------------------------------------------------

def test_cost_perfect_relay():
    rng = np.random.default_rng(1)
    net = Network.relay((2, 2, 2))
    ins = np.array([haar_random_state(4, rng) for _ in range(6)])
    data = Dataset(ins, ins)
    assert cost(net, data) == pytest.approx(1.0, abs=1e-10)


def test_cost_orthogonal_targets():
    net = Network.relay((1, 1))
    ins = np.array([basis_state(2, 0)])
    outs = np.array([basis_state(2, 1)])
    assert cost(net, Dataset(ins, outs)) == pytest.approx(0.0, abs=1e-12)


def test_cost_matches_oracle_recomputation():
    rng = np.random.default_rng(2)
    net = Network.random((2, 2), rng)
    data = random_dataset(10, 4, 4, rng)
    expected = np.mean(
        [
            fidelity_pure(data.outputs[i], global_conjugation_oracle(net, data.inputs[i]))
            for i in range(10)
        ]
    )
    assert cost(net, data) == pytest.approx(expected, abs=1e-10)


def test_cost_rejects_empty_dataset():
    net = Network.random((1, 1), np.random.default_rng(3))
    with pytest.raises(ValueError):
        cost(net, Dataset(np.zeros((0, 2)), np.zeros((0, 2))))


# ---------------------------------------------------------------------------
# commutator matrices
# ---------------------------------------------------------------------------

def test_commutator_vanishes_for_fixed_point():
    net = Network.identity((1, 1))
    m = commutator_matrix_M(net, 0, 0, zero_projector(1), zero_projector(1))
    assert np.allclose(m, 0, atol=1e-14)


def test_commutator_traceless_and_antihermitian():
    rng = np.random.default_rng(4)
    net = Network.random((2, 2), rng)
    cache = build_cache(net, haar_random_state(4, rng), haar_random_state(4, rng))
    for j in range(2):
        m = commutator_matrix_M(net, 0, j, cache.rhos[0], cache.sigmas[1])
        assert abs(np.trace(m)) < 1e-12
        assert np.max(np.abs(m + m.conj().T)) < 1e-10


def test_commutator_matches_whole_register_oracle():
    # the two-layer commutator, traced to the perceptron support, must agree
    # with the unsimplified whole-register form
    rng = np.random.default_rng(5)
    for widths in [(2, 2), (1, 2, 1), (2, 3, 2)]:
        net = Network.random(widths, rng)
        phi_in = haar_random_state(1 << widths[0], rng)
        phi_out = haar_random_state(1 << widths[-1], rng)
        cache = build_cache(net, phi_in, phi_out)
        for k in range(net.transition_count):
            m_prev, m_cur = widths[k], widths[k + 1]
            for j in range(len(net.layers[k])):
                p = net.layers[k][j]
                m_local = commutator_matrix_M(net, k, j, cache.rhos[k], cache.sigmas[k + 1])
                keep = tuple(range(m_prev)) + tuple(m_prev + t for t in p.targets)
                from dqnn.linalg import partial_trace

                local = partial_trace(m_local, m_prev + m_cur, keep)
                oracle = global_commutator_oracle(net, k, j, phi_in, phi_out)
                assert np.max(np.abs(local - oracle)) < 1e-10


def test_commutator_index_errors():
    net = Network.random((1, 1), np.random.default_rng(6))
    with pytest.raises(IndexError):
        commutator_matrix_M(net, 0, 5, zero_projector(1), zero_projector(1))


# ---------------------------------------------------------------------------
# parameter matrices
# ---------------------------------------------------------------------------

def test_k_zero_for_perfect_network():
    rng = np.random.default_rng(7)
    net = Network.identity((1, 1))
    zero = np.array([basis_state(2, 0)])
    caches = [build_cache(net, zero[0], zero[0])]
    k = parameter_matrix_K(net, 0, 0, caches, eta=1.0)
    assert np.allclose(k, 0, atol=1e-14)


def test_k_linear_in_eta():
    rng = np.random.default_rng(8)
    net = Network.random((2, 2), rng)
    data = random_dataset(3, 4, 4, rng)
    caches = [build_cache(net, data.inputs[i], data.outputs[i]) for i in range(3)]
    k1 = parameter_matrix_K(net, 0, 0, caches, eta=0.5)
    k2 = parameter_matrix_K(net, 0, 1, caches, eta=1.0)
    assert np.allclose(2 * k1, parameter_matrix_K(net, 0, 0, caches, eta=1.0), atol=1e-14)
    assert np.allclose(2 * k2, parameter_matrix_K(net, 0, 1, caches, eta=2.0), atol=1e-14)


def test_k_hermitian_over_random_instances():
    rng = np.random.default_rng(9)
    checked = 0
    for _ in range(45):
        widths = [(1, 1), (2, 2), (1, 2, 1), (2, 3, 2)][rng.integers(4)]
        net = Network.random(widths, rng)
        data = random_dataset(int(rng.integers(1, 5)), 1 << widths[0], 1 << widths[-1], rng)
        caches = [build_cache(net, data.inputs[i], data.outputs[i]) for i in range(len(data))]
        for k in range(net.transition_count):
            for j in range(len(net.layers[k])):
                mat = parameter_matrix_K(net, k, j, caches, eta=1.0)
                assert np.max(np.abs(mat - mat.conj().T)) < 1e-9
                checked += 1
    assert checked >= 100


def test_k_requires_caches():
    net = Network.random((1, 1), np.random.default_rng(10))
    with pytest.raises(ValueError):
        parameter_matrix_K(net, 0, 0, [], eta=1.0)


def test_hot_path_matches_per_pair_route():
    from dqnn.training import _round_quantities

    rng = np.random.default_rng(11)
    for widths in [(2, 2), (2, 3, 2)]:
        net = Network.random(widths, rng)
        data = random_dataset(4, 1 << widths[0], 1 << widths[-1], rng)
        hot, _ = _round_quantities(net, data, eta=0.8)
        naive = all_k_matrices(net, data, eta=0.8)
        for k in range(net.transition_count):
            for j in range(len(net.layers[k])):
                assert np.max(np.abs(hot[k][j] - naive[k][j])) < 1e-12


# ---------------------------------------------------------------------------
# gradient correctness
# ---------------------------------------------------------------------------

def test_analytic_derivative_matches_central_difference():
    rng = np.random.default_rng(12)
    probe = 1e-4
    for widths in [(2, 2), (2, 3, 2)]:
        for _ in range(5):
            net = Network.random(widths, rng)
            data = random_dataset(4, 1 << widths[0], 1 << widths[-1], rng)
            eta = 0.7
            analytic = analytic_cost_derivative(net, data, eta)
            ks, _ = __import__("dqnn.training", fromlist=["_round_quantities"])._round_quantities(
                net, data, eta
            )
            fd = (stepped_cost(net, ks, probe, data) - stepped_cost(net, ks, -probe, data)) / (
                2 * probe
            )
            assert abs(analytic - fd) < 1e-4 * max(abs(fd), 1e-2)


def test_single_perceptron_pauli_directions():
    # central finite differences along all 16 two-qubit Pauli directions of a
    # width-1 perceptron agree with tr(G P)
    rng = np.random.default_rng(13)
    net = Network.random((1, 1), rng)
    data = random_dataset(4, 2, 2, rng)
    caches = [build_cache(net, data.inputs[i], data.outputs[i]) for i in range(len(data))]
    # gradient generator at eta = 1 carries the 2**m completeness factor;
    # strip it to get G with dC/dt along P equal to tr(G P)
    g = parameter_matrix_K(net, 0, 0, caches, eta=1.0) / 2.0
    paulis = [np.eye(2), np.array([[0, 1], [1, 0]]), np.array([[0, -1j], [1j, 0]]), np.diag([1, -1])]
    probe = 1e-4
    for a in range(4):
        for b in range(4):
            direction = np.kron(paulis[a], paulis[b]).astype(complex)
            analytic = np.real(np.trace(g @ direction))

            def moved(eps):
                u = expm_i_hermitian(direction, eps) @ net.layers[0][0].unitary
                moved_net = Network((1, 1), ((Perceptron(u, (0,)),),), validate=False)
                return cost(moved_net, data)

            fd = (moved(probe) - moved(-probe)) / (2 * probe)
            assert abs(analytic - fd) < 1e-4 * max(abs(fd), 1e-2)


def test_derivative_identity_two_expressions():
    # (1/N) sum_x sum_l tr(sigma_l D_l(rho_{l-1})) == (i/N) sum tr(M K),
    # evaluated with embedded products on the two-layer spaces
    rng = np.random.default_rng(14)
    net = Network.random((2, 3, 2), rng)
    data = random_dataset(3, 4, 4, rng)
    eta = 1.0
    caches = [build_cache(net, data.inputs[i], data.outputs[i]) for i in range(len(data))]
    ks = all_k_matrices(net, data, eta)

    total_mk = 0.0
    for x, cache in enumerate(caches):
        for k in range(net.transition_count):
            for j in range(len(net.layers[k])):
                m = commutator_matrix_M(net, k, j, cache.rhos[k], cache.sigmas[k + 1])
                p = net.layers[k][j]
                m_prev, m_cur = net.widths[k], net.widths[k + 1]
                positions = tuple(range(m_prev)) + tuple(m_prev + t for t in p.targets)
                from dqnn.linalg import embed

                k_emb = embed(ks[k][j], positions, m_prev + m_cur)
                total_mk += np.real(1j * np.trace(m @ k_emb))
    total_mk /= len(caches)

    total_sigma = 0.0
    for cache in caches:
        for k in range(net.transition_count):
            m_prev, m_cur = net.widths[k], net.widths[k + 1]
            ops = net.embedded_perceptrons(k)
            loaded = np.kron(cache.rhos[k], zero_projector(m_cur))
            deriv = np.zeros_like(loaded)
            for j in range(len(ops)):
                p = net.layers[k][j]
                positions = tuple(range(m_prev)) + tuple(m_prev + t for t in p.targets)
                from dqnn.linalg import embed

                k_emb = embed(ks[k][j], positions, m_prev + m_cur)
                inner = loaded
                for i in range(j + 1):
                    inner = ops[i] @ inner @ ops[i].conj().T
                comm = 1j * (k_emb @ inner - inner @ k_emb)
                for i in range(j + 1, len(ops)):
                    comm = ops[i] @ comm @ ops[i].conj().T
                deriv += comm
            lifted_sigma = np.kron(np.eye(1 << m_prev), cache.sigmas[k + 1])
            total_sigma += np.real(np.trace(lifted_sigma @ deriv))
    total_sigma /= len(caches)

    assert abs(total_mk - total_sigma) < 1e-8


# ---------------------------------------------------------------------------
# training steps and loop
# ---------------------------------------------------------------------------

def test_step_with_zero_epsilon_is_identity():
    rng = np.random.default_rng(15)
    net = Network.random((2, 2), rng)
    data = random_dataset(3, 4, 4, rng)
    stepped, cost_before = training_step(net, data, TrainingConfig(epsilon=0.0, eta=1.0, rounds=1))
    assert stepped is net
    for k in range(net.transition_count):
        for p, q in zip(net.layers[k], stepped.layers[k]):
            assert p.unitary is q.unitary
    assert cost_before == pytest.approx(cost(net, data), abs=1e-14)


def test_step_perfect_network_unchanged():
    rng = np.random.default_rng(16)
    net = Network.relay((2, 2))
    ins = np.array([haar_random_state(4, rng) for _ in range(4)])
    data = Dataset(ins, ins)
    stepped, cost_before = training_step(net, data, TrainingConfig(epsilon=0.1, eta=1.0, rounds=1))
    assert cost_before == pytest.approx(1.0, abs=1e-12)
    for k in range(net.transition_count):
        for p, q in zip(net.layers[k], stepped.layers[k]):
            assert np.max(np.abs(p.unitary - q.unitary)) < 1e-12


def test_step_ascends():
    rng = np.random.default_rng(17)
    ok = 0
    for seed in range(20):
        net = Network.random((2, 2), split_rng(seed, 0))
        data = unitary_dataset(5, 2, split_rng(seed, 1))
        cfg = TrainingConfig(epsilon=0.01, eta=1.0, rounds=1)
        stepped, before = training_step(net, data, cfg)
        ok += cost(stepped, data) >= before - 1e-9
    assert ok == 20


def test_train_zero_rounds():
    rng = np.random.default_rng(18)
    net = Network.random((1, 1), rng)
    data = random_dataset(2, 2, 2, rng)
    hist = train(net, data, TrainingConfig(epsilon=0.1, eta=1.0, rounds=0))
    assert hist.costs == (pytest.approx(cost(net, data), abs=1e-14),)
    assert hist.final_network is net


def test_train_history_structure_and_determinism():
    rng = split_rng(19, 0)
    net = Network.random((2, 2), rng)
    data = unitary_dataset(4, 2, split_rng(19, 1))
    cfg = TrainingConfig(epsilon=0.1, eta=1.0, rounds=25, seed=19, record_k_norms=True)
    h1 = train(net, data, cfg)
    h2 = train(net, data, cfg)
    assert len(h1.costs) == 26
    assert len(h1.k_norms) == 25
    assert h1.costs == h2.costs  # bit-for-bit
    assert h1.config is cfg
    # ascent overall
    assert h1.costs[-1] > h1.costs[0]


def test_history_csv_round_trip(tmp_path):
    rng = split_rng(20, 0)
    net = Network.random((1, 1), rng)
    data = unitary_dataset(3, 1, split_rng(20, 1))
    hist = train(net, data, TrainingConfig(epsilon=0.1, eta=1.0, rounds=3, record_k_norms=True))
    path = tmp_path / "history.csv"
    hist.write_csv(path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "round,cost,k_norm_l0_j0"
    assert len(lines) == 5  # header + rounds+1 entries
    # costs round-trip through repr exactly
    assert float(lines[1].split(",")[1]) == hist.costs[0]


def test_long_run_unitarity():
    # 10^4 update steps must leave every perceptron unitary to 1e-8
    rng = split_rng(21, 0)
    net = Network.random((1, 1), rng)
    data = unitary_dataset(4, 1, split_rng(21, 1))
    hist = train(net, data, TrainingConfig(epsilon=0.05, eta=1.0, rounds=10_000))
    for layer in hist.final_network.layers:
        for p in layer:
            assert unitarity_error(p.unitary) < 1e-8


def test_convergence_small_network():
    # 2-2 network, 10 pairs of a random target unitary: cost passes 0.95
    # within 1000 rounds for at least 18 of 20 seeds
    hits = 0
    for seed in range(20):
        net = Network.random((2, 2), split_rng(seed, 100))
        data = unitary_dataset(10, 2, split_rng(seed, 101))
        cfg = TrainingConfig(epsilon=0.1, eta=1.0, rounds=100)
        best = cost(net, data)
        for _ in range(10):  # 10 chunks of 100 rounds = 1000 rounds cap
            hist = train(net, data, cfg)
            net = hist.final_network
            best = max(best, hist.costs[-1])
            if best > 0.95:
                break
        hits += best > 0.95
    assert hits >= 18


# ---------------------------------------------------------------------------
# gradient norm probe
# ---------------------------------------------------------------------------

def test_probe_zero_for_perfect_network():
    rng = np.random.default_rng(22)
    net = Network.relay((2, 2))
    ins = np.array([haar_random_state(4, rng) for _ in range(3)])
    probe = gradient_norm_probe(net, Dataset(ins, ins))
    assert set(probe) == {(0, 0), (0, 1)}
    assert all(v < 1e-9 for v in probe.values())


def test_probe_scales_linearly_with_eta():
    rng = np.random.default_rng(23)
    net = Network.random((2, 2), rng)
    data = random_dataset(4, 4, 4, rng)
    caches = [build_cache(net, data.inputs[i], data.outputs[i]) for i in range(len(data))]
    n1 = np.linalg.norm(parameter_matrix_K(net, 0, 0, caches, eta=1.0))
    n3 = np.linalg.norm(parameter_matrix_K(net, 0, 0, caches, eta=3.0))
    assert n3 == pytest.approx(3 * n1, rel=1e-12)
    assert gradient_norm_probe(net, data)[(0, 0)] == pytest.approx(n1, rel=1e-12)


def test_probe_initialization_statistics():
    # observational: K norms of freshly initialised 3-3-3 networks stay
    # clearly away from zero (no barren plateau at this scale)
    norms = []
    for seed in range(20):
        net = Network.random((3, 3, 3), split_rng(seed, 200))
        data = unitary_dataset(4, 3, split_rng(seed, 201))
        probe = gradient_norm_probe(net, data)
        norms.append(np.median(list(probe.values())))
    median = float(np.median(norms))
    print(f"\nmedian initial K norm over 20 seeds (3-3-3): {median:.4f}")
    assert median > 0.0
