import numpy as np
import pytest

import dense_oracle as dense
from walkport.noise import NoiseParams
from walkport.protocol import (
    ProtocolConfig,
    RegisterLayout,
    bitwise_and_parity,
    build_layout,
    conditional_shift,
    correction_unitary,
    exact_distribution,
    hadamard_layer,
    initial_state,
    run_all_branches,
    run_protocol_branch,
    run_protocol_sampled,
    walk_state,
)
from walkport.rng import shot_stream
from walkport.states import prepare_arbitrary, prepare_bell, prepare_w
from walkport.statevector import (
    StateVector,
    apply_controlled_permutation,
    collapse,
    equal_up_to_phase,
    new_basis_state,
    register_probabilities,
    sample_index,
    tensor,
)

A, B = np.sqrt(3) / 2, 0.5
I2 = np.eye(2)
X = np.array([[0, 1], [1, 0]])
Z = np.diag([1, -1])


def payload():
    return prepare_arbitrary([A, B])


def random_phi(rng, n):
    v = rng.normal(size=1 << n) + 1j * rng.normal(size=1 << n)
    return StateVector(v / np.linalg.norm(v))


class TestLayout:
    def test_single_qubit(self):
        lay = build_layout(1)
        assert (lay.position, lay.alice_coin, lay.bob_coin, lay.ancilla) == ((0,), (1,), (2,), ())

    def test_two_qubit(self):
        lay = build_layout(2)
        assert (lay.position, lay.alice_coin, lay.bob_coin) == ((0, 1), (2, 3), (4, 5))

    def test_three_qubit(self):
        lay = build_layout(3)
        assert (lay.position, lay.alice_coin, lay.bob_coin) == ((0, 1, 2), (3, 4, 5), (6, 7, 8))
        assert lay.num_qubits == 9

    def test_invalid_layouts(self):
        with pytest.raises(ValueError):
            build_layout(0)
        with pytest.raises(ValueError):
            RegisterLayout((0,), (0,), (2,))
        with pytest.raises(ValueError):
            RegisterLayout((0, 1), (2,), (3, 4))


class TestConditionalShift:
    def test_single_qubit_is_cnot(self):
        s = tensor(new_basis_state(1, 0), new_basis_state(1, 1))
        out = conditional_shift(s, [1], [0])
        assert out.amplitudes[0b11] == 1

    def test_two_qubit_wraps(self):
        # coin 3, position 2 -> (2 + 3) mod 4 = 1
        s = tensor(new_basis_state(2, 2), new_basis_state(2, 3))
        out = conditional_shift(s, [2, 3], [0, 1])
        assert out.amplitudes[0b0111] == 1

    def test_entangles_coin_with_position(self):
        rng = np.random.default_rng(0)
        phi = random_phi(rng, 2)
        out = conditional_shift(initial_state(phi), [2, 3], [0, 1])
        expected = np.zeros(64, complex)
        for k in range(4):
            expected[k * 16 + k * 4] = phi.amplitudes[k]
        np.testing.assert_allclose(out.amplitudes, expected, atol=1e-15)

    def test_fused_kernel_equals_controlled_permutations(self):
        rng = np.random.default_rng(1)
        for n in (1, 2, 3):
            d = 1 << n
            psi = random_phi(rng, 3 * n)
            coin, pos = list(range(2 * n, 3 * n)), list(range(n))
            loop = psi
            for k in range(d):
                loop = apply_controlled_permutation(loop, coin, k, pos, [(l + k) % d for l in range(d)])
            np.testing.assert_array_equal(conditional_shift(psi, coin, pos).amplitudes, loop.amplitudes)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            conditional_shift(new_basis_state(3), [0], [1, 2])


class TestHadamardLayer:
    def test_one_qubit(self):
        np.testing.assert_allclose(hadamard_layer(new_basis_state(1), [0]).amplitudes, [2**-0.5] * 2)

    def test_uniform_superposition(self):
        np.testing.assert_allclose(hadamard_layer(new_basis_state(2), [0, 1]).amplitudes, [0.5] * 4)

    def test_signs_follow_and_parity(self):
        out = hadamard_layer(new_basis_state(2, 3), [0, 1])
        np.testing.assert_allclose(out.amplitudes, [0.5, -0.5, -0.5, 0.5])


class TestParity:
    @pytest.mark.parametrize("k", range(8))
    def test_zero(self, k):
        assert bitwise_and_parity(0, k) == 0

    def test_examples(self):
        assert bitwise_and_parity(3, 3) == 0
        assert bitwise_and_parity(1, 3) == 1

    def test_matches_hadamard_signs(self):
        h = np.rint(dense.hadamard_n(3) * np.sqrt(8))
        for i in range(8):
            for k in range(8):
                assert h[i, k] == (-1) ** bitwise_and_parity(i, k)


class TestCorrectionUnitary:
    @pytest.mark.parametrize(
        "p,q,expected",
        [(0, 0, I2), (1, 0, Z), (0, 1, X), (1, 1, Z @ X)],
    )
    def test_single_qubit_table(self, p, q, expected):
        np.testing.assert_array_equal(correction_unitary(p, q, 1), expected)

    def test_two_qubit_reflection(self):
        expected = np.zeros((4, 4))
        for row, col in [(0, 0), (1, 3), (2, 2), (3, 1)]:
            expected[row, col] = 1
        np.testing.assert_array_equal(correction_unitary(0, 0, 2), expected)

    @pytest.mark.parametrize("n", [1, 2, 3])
    def test_signed_permutations(self, n):
        d = 1 << n
        for p in range(d):
            for q in range(d):
                u = correction_unitary(p, q, n)
                assert set(np.unique(u)) <= {-1.0, 0.0, 1.0}
                assert np.all(np.count_nonzero(u, axis=0) == 1)
                assert np.all(np.count_nonzero(u, axis=1) == 1)
                np.testing.assert_array_equal(u @ u.T, np.eye(d))

    def test_out_of_range(self):
        with pytest.raises(ValueError):
            correction_unitary(4, 0, 2)


class TestIntermediateStates:
    def test_after_alice_shift(self):
        lay = build_layout(1)
        psi = conditional_shift(initial_state(payload()), lay.alice_coin, lay.position)
        expected = np.zeros(8)
        expected[0b000], expected[0b110] = A, B
        np.testing.assert_allclose(psi.amplitudes, expected, atol=1e-15)

    def test_after_bob_steps(self):
        psi = walk_state(payload())
        expected = np.zeros(8)
        s = 1 / np.sqrt(2)
        expected[0b000], expected[0b011] = A * s, B * s
        expected[0b101], expected[0b110] = A * s, B * s
        np.testing.assert_allclose(psi.amplitudes, expected, atol=1e-15)

    def test_position_zero_residual(self):
        post, prob = collapse(walk_state(payload()), [0], 0)
        expected = np.zeros(8)
        expected[0b000], expected[0b011] = A, B
        assert prob == pytest.approx(0.5)
        np.testing.assert_allclose(post.amplitudes, expected, atol=1e-15)

    def test_position_register_is_uniform(self):
        np.testing.assert_allclose(register_probabilities(walk_state(new_basis_state(1)), [0]), [0.5, 0.5])

    @pytest.mark.parametrize("n", [1, 2])
    def test_walk_matches_dense_matrices(self, n):
        rng = np.random.default_rng(10 + n)
        for _ in range(5):
            phi = random_phi(rng, n)
            diff = np.max(np.abs(walk_state(phi).amplitudes - dense.walked_vector(phi.amplitudes, n)))
            assert diff < 1e-12


class TestBranches:
    def test_payload_no_correction(self):
        res = run_protocol_branch(payload(), 0, 0)
        np.testing.assert_allclose(res.bob_state.amplitudes, [A, B], atol=1e-12)
        assert res.fidelity_to_input == pytest.approx(1, abs=1e-12)

    def test_payload_x_branch(self):
        res = run_protocol_branch(payload(), 1, 0)
        assert equal_up_to_phase(res.bob_before_correction, StateVector(np.array([B, A])))
        assert res.fidelity_to_input == pytest.approx(1, abs=1e-12)

    def test_bell_all_branches_against_dense_oracle(self):
        phi = prepare_bell()
        for q in range(4):
            for p in range(4):
                bob_raw, weight = dense.branch(phi.amplitudes, 2, q, p)
                res = run_protocol_branch(phi, q, p)
                assert res.record.branch_probability == pytest.approx(1 / 16, abs=1e-12)
                assert weight == pytest.approx(1 / 16, abs=1e-12)
                assert equal_up_to_phase(res.bob_before_correction, StateVector(bob_raw / np.sqrt(weight)))
                assert res.fidelity_to_input > 1 - 1e-10

    def test_shared_prefix_equals_single_branch(self):
        phi = random_phi(np.random.default_rng(3), 2)
        for res in run_all_branches(phi):
            single = run_protocol_branch(phi, res.record.q, res.record.p)
            np.testing.assert_allclose(res.bob_state.amplitudes, single.bob_state.amplitudes, atol=1e-14)
            assert res.record == single.record

    def test_unnormalized_input(self):
        with pytest.raises(ValueError):
            run_protocol_branch(StateVector(np.array([1.0, 1.0])), 0, 0)

    def test_config_mismatch(self):
        with pytest.raises(ValueError):
            run_protocol_branch(payload(), 0, 0, ProtocolConfig(n=2))


class TestExactDistribution:
    def test_payload(self):
        np.testing.assert_allclose(exact_distribution(payload()), [0.75, 0.25], atol=1e-12)

    def test_bases(self):
        np.testing.assert_allclose(exact_distribution(payload(), "X"), [(1 + 2 * A * B) / 2, (1 - 2 * A * B) / 2], atol=1e-12)
        np.testing.assert_allclose(exact_distribution(payload(), "Y"), [0.5, 0.5], atol=1e-12)


class TestSampled:
    def test_payload_within_three_sigma(self):
        run = run_protocol_sampled(payload(), ProtocolConfig(n=1, shots=8192, seed=11))
        assert abs(run.probabilities[0] - 0.75) < 3 * np.sqrt(0.75 * 0.25 / 8192)
        assert run.counts.sum() == 8192

    def test_bell_only_correlated_outcomes(self):
        run = run_protocol_sampled(prepare_bell(), ProtocolConfig(n=2, shots=8192, seed=12))
        h = run.histogram
        assert h["01"] == h["10"] == 0
        for key in ("00", "11"):
            assert abs(h[key] / 8192 - 0.5) < 3 * np.sqrt(0.25 / 8192)

    def test_w_outcomes(self):
        run = run_protocol_sampled(prepare_w(), ProtocolConfig(n=3, shots=8192, seed=13))
        p = run.probabilities
        assert set(np.flatnonzero(p)) == {1, 2, 4}
        sigma = np.sqrt((1 / 3) * (2 / 3) / 8192)
        assert np.all(np.abs(p[[1, 2, 4]] - 1 / 3) < 3 * sigma)

    def test_reproducible(self):
        cfg = ProtocolConfig(n=2, shots=500, seed=99)
        a = run_protocol_sampled(prepare_bell(), cfg)
        b = run_protocol_sampled(prepare_bell(), cfg)
        np.testing.assert_array_equal(a.outcomes, b.outcomes)
        np.testing.assert_array_equal(a.q, b.q)

    def test_branches_uniform(self):
        run = run_protocol_sampled(payload(), ProtocolConfig(n=1, shots=8000, seed=5))
        joint = np.bincount(run.q * 2 + run.p, minlength=4) / 8000
        assert np.all(np.abs(joint - 0.25) < 3 * np.sqrt(0.25 * 0.75 / 8000))
        assert all(r.record.branch_probability == pytest.approx(0.25) for r in run.results)

    def test_shot_matches_its_own_stream(self):
        # replay shot 37 by hand with its own generator
        phi = payload()
        run = run_protocol_sampled(phi, ProtocolConfig(n=1, shots=64, seed=21))
        u = shot_stream(21, 37).random(3)
        psi = walk_state(phi)
        q = int(sample_index(register_probabilities(psi, [0]), u[0]))
        psi, _ = collapse(psi, [0], q)
        psi = hadamard_layer(psi, [1])
        p = int(sample_index(register_probabilities(psi, [1]), u[1]))
        assert (run.q[37], run.p[37]) == (q, p)
        bob = run.results[run.trajectory[37]].bob_state
        assert int(sample_index(bob.probabilities(), u[2])) == run.outcomes[37]

    def test_zero_noise_is_bit_identical(self):
        cfg = ProtocolConfig(n=2, shots=2000, seed=4)
        clean = run_protocol_sampled(prepare_bell(), cfg)
        zero = run_protocol_sampled(prepare_bell(), ProtocolConfig(n=2, shots=2000, seed=4, noise=NoiseParams()))
        np.testing.assert_array_equal(clean.outcomes, zero.outcomes)
        np.testing.assert_array_equal(clean.q, zero.q)
        np.testing.assert_array_equal(clean.p, zero.p)

    def test_noise_lowers_fidelity(self):
        run = run_protocol_sampled(payload(), ProtocolConfig(n=1, shots=4000, seed=8, noise=NoiseParams(0.05, 0.05, 0.0)))
        assert run.fidelities.mean() < 1 - 1e-3
        assert len(run.results) > 4

    def test_shots_validated(self):
        with pytest.raises(ValueError):
            ProtocolConfig(n=1, shots=0)
        with pytest.raises(ValueError):
            ProtocolConfig(n=1, mode="bogus")
