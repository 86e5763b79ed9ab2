import numpy as np
import pytest
from scipy import linalg

from twomode.boundstates import SystemParams, find_bound_states
from twomode.errors import StepSizeError
from twomode.propagator import (completeness, cut_spectrum, dominant_frequency, exact_closed,
                                oscillation_frequency, u_localized, u_spectral, u_volterra, v_from_u,
                                v_volterra)
from twomode.spectral import BathParams


@pytest.fixture(scope="module")
def long_runs(fig5_system, fig5_baths):
    """Volterra trajectories to t = 300 for the three regimes."""
    return {eta: u_volterra(fig5_system, b, 300.0) for eta, b in fig5_baths.items()}


@pytest.fixture(scope="module")
def hot():
    system = SystemParams.from_detuning(1.0, 0.1, 0.2)
    bath = BathParams(0.3, 1.0, 5.0, 0.7, temperature=0.5)
    traj = u_volterra(system, bath, 20.0, 0.01)
    return system, bath, v_from_u(traj, bath), v_volterra(system, bath, traj)


def window(traj, lo, hi):
    sel = (traj.times >= lo - 1e-9) & (traj.times <= hi + 1e-9)
    return traj.times[sel], traj.u[sel]


class TestVolterra:
    def test_uncoupled_exact(self, fig5_system):
        traj = u_volterra(fig5_system, BathParams(0.0), 50.0, 0.01)
        expected = np.array([linalg.expm(-1j * fig5_system.matrix * t) for t in traj.times[::500]])
        assert np.abs(traj.u[::500] - expected).max() < 1e-10
        assert np.abs(traj.u - exact_closed(fig5_system, traj.times)).max() < 1e-10

    def test_initial_identity(self, long_runs):
        for traj in long_runs.values():
            assert np.array_equal(traj.u[0], np.eye(2))

    def test_step_rejected(self, fig5_system, fig5_baths):
        with pytest.raises(StepSizeError):
            u_volterra(fig5_system, fig5_baths[0.3], 10.0, 0.5)

    def test_grid_mismatch(self, fig5_system, fig5_baths):
        with pytest.raises(ValueError):
            u_volterra(fig5_system, fig5_baths[0.3], 10.003, 0.01)

    def test_second_order(self, fig5_system):
        bath = BathParams(0.3, 0.6, 5.0, 0.4)
        runs = [u_volterra(fig5_system, bath, 10.0, dt) for dt in (0.04, 0.02, 0.01)]
        coarse = np.abs(runs[0].u - runs[1].u[::2]).max()
        fine = np.abs(runs[1].u - runs[2].u[::2]).max()
        assert 3.2 < coarse / fine < 4.8

    def test_derivative_consistent(self, fig5_system, fig5_baths):
        traj = u_volterra(fig5_system, fig5_baths[0.3], 10.0, 0.005)
        fd = np.gradient(traj.u, traj.dt, axis=0, edge_order=2)
        assert np.abs(fd[5:-5] - traj.u_dot[5:-5]).max() < 1e-3

    def test_contractive_at_zero_temperature(self, long_runs):
        for traj in long_runs.values():
            assert np.linalg.svd(traj.u, compute_uv=False).max() <= 1.0 + 1e-6


class TestSpectralRoute:
    @pytest.mark.parametrize("eta", [0.05, 0.2, 0.3])
    def test_matches_volterra(self, fig5_system, fig5_baths, long_runs, eta):
        times, u = window(long_runs[eta], 0.0, 50.0)
        spec = u_spectral(fig5_system, fig5_baths[eta], find_bound_states(fig5_system, fig5_baths[eta]), times[::4])
        assert np.abs(spec.u - u[::4]).max() < 1e-3

    def test_matrix_form(self):
        system = SystemParams.from_detuning(1.0, -0.15, 0.2)
        bath = BathParams(0.35, 0.7, 4.0, 0.3)
        states = find_bound_states(system, bath)
        traj = u_volterra(system, bath, 30.0, 0.01)
        spec = u_spectral(system, bath, states, traj.times[::10])
        assert np.abs(spec.u - traj.u[::10]).max() < 1e-3

    def test_eigen_and_matrix_forms_agree(self, fig5_system, fig5_baths):
        bath = fig5_baths[0.2]
        states = find_bound_states(fig5_system, bath)
        times = np.linspace(0, 20, 41)
        a = u_spectral(fig5_system, bath, states, times, form="eigen").u
        b = u_spectral(fig5_system, bath, states, times, form="matrix").u
        assert np.abs(a - b).max() < 1e-6

    @pytest.mark.parametrize("eta", [0.05, 0.2, 0.3])
    def test_completeness(self, fig5_system, fig5_baths, eta):
        total = completeness(fig5_system, fig5_baths[eta], find_bound_states(fig5_system, fig5_baths[eta]))
        assert np.abs(total - np.eye(2)).max() < 1e-3

    def test_undamped_mode_rejected(self):
        with pytest.raises(ValueError):
            cut_spectrum(SystemParams(1.0, 1.2), BathParams(0.2, lam=0.0))


class TestRegimes:
    def test_decay(self, long_runs):
        times, u = window(long_runs[0.05], 100.0, 100.0)
        assert np.abs(u[0, 0, 0]) < 0.05 and np.abs(u[0, 1, 1]) < 0.05
        assert np.abs(window(long_runs[0.05], 200.0, 200.0)[1]).max() < 0.05

    def test_plateau(self, long_runs):
        _, u = window(long_runs[0.2], 60.0, 200.0)
        assert np.abs(u).std(axis=0).max() < 1e-2

    def test_oscillation_amplitude_steady(self, long_runs):
        amp = []
        for lo, hi in ((100.0, 200.0), (200.0, 300.0)):
            u12 = np.abs(window(long_runs[0.3], lo, hi)[1][:, 0, 1])
            amp.append(u12.max() - u12.min())
        assert amp[0] > 0.1
        assert abs(amp[0] - amp[1]) / amp[0] < 0.05

    @pytest.mark.parametrize("eta", [0.2, 0.3])
    def test_approaches_localized(self, fig5_system, fig5_baths, long_runs, eta):
        times, u = window(long_runs[eta], 60.0, 300.0)
        ul = u_localized(find_bound_states(fig5_system, fig5_baths[eta]), times)
        assert np.abs(np.abs(u) - np.abs(ul)).max() < 1e-2


class TestLocalized:
    def test_single_state_constant(self, fig5_system, fig5_baths):
        ul = np.abs(u_localized(find_bound_states(fig5_system, fig5_baths[0.2]), np.linspace(0, 100, 201)))
        assert np.ptp(ul, axis=0).max() < 1e-12

    def test_two_states_oscillate(self, fig5_system, fig5_baths):
        states = find_bound_states(fig5_system, fig5_baths[0.3])
        times = np.linspace(0, 100, 2001)
        u12 = np.abs(u_localized(states, times)[:, 0, 1])
        period = 2 * np.pi / oscillation_frequency(states).magnitude
        shifted = np.abs(u_localized(states, times + period)[:, 0, 1])
        assert np.ptp(u12) > 0.1
        assert np.abs(u12 - shifted).max() < 1e-12

    @pytest.mark.parametrize("eta", [0.2, 0.3, 0.6])
    def test_bounded_at_origin(self, fig5_system, eta):
        # I - sum Z is the branch-cut integral of a positive semidefinite density
        z = u_localized(find_bound_states(fig5_system, BathParams(eta)), [0.0])[0]
        assert np.all(z.real.diagonal() <= 1.0 + 1e-3)
        assert np.linalg.eigvalsh(np.eye(2) - z).min() >= -1e-3

    def test_empty(self):
        with pytest.raises(ValueError):
            u_localized([], [0.0])


class TestOscillationFrequency:
    def test_fft_peak(self, fig5_system, fig5_baths, long_runs):
        states = find_bound_states(fig5_system, fig5_baths[0.3])
        w = oscillation_frequency(states)
        assert w.value < 0 and w.magnitude == pytest.approx(-w.value)
        times, u = window(long_runs[0.3], 40.0, 200.0)
        peak = dominant_frequency(times, np.abs(u[:, 0, 1]) ** 2)
        assert peak == pytest.approx(w.magnitude, rel=0.02)

    def test_grows_with_kappa(self):
        vals = [oscillation_frequency(find_bound_states(SystemParams.from_detuning(1.0, 0.25, k),
                                                        BathParams(0.3))).magnitude for k in (0.1, 0.25, 0.4)]
        assert vals[0] < vals[1] < vals[2]

    def test_degenerate(self):
        states = find_bound_states(SystemParams(1.0, 1.0), BathParams(0.3))
        assert oscillation_frequency(states).magnitude == pytest.approx(0.0, abs=1e-11)

    def test_needs_two_states(self, fig5_system, fig5_baths):
        with pytest.raises(ValueError):
            oscillation_frequency(find_bound_states(fig5_system, fig5_baths[0.2]))

    def test_dominant_frequency_synthetic(self):
        t = np.arange(0, 200, 0.05)
        assert dominant_frequency(t, 0.3 + np.cos(0.731 * t + 0.4)) == pytest.approx(0.731, rel=1e-3)


class TestFluctuation:
    def test_zero_temperature(self, long_runs, fig5_baths):
        traj = long_runs[0.3]
        short = type(traj)(traj.times[:200], traj.u[:200], traj.method)
        assert not np.any(v_from_u(short, fig5_baths[0.3]).v)

    def test_uncoupled(self, fig5_system):
        bath = BathParams(0.0, temperature=1.0)
        traj = u_volterra(fig5_system, bath, 5.0)
        assert not np.any(v_from_u(traj, bath).v) and not np.any(v_volterra(fig5_system, bath, traj).v)

    def test_hermitian_psd(self, hot):
        _, _, a, b = hot
        for v in (a.v, b.v):
            assert np.abs(v - np.conj(np.swapaxes(v, 1, 2))).max() < 1e-12
            assert np.linalg.eigvalsh(v).min() >= -1e-8

    def test_routes_agree(self, hot):
        _, _, a, b = hot
        assert np.abs(a.v - b.v).max() < 1e-3
        assert np.abs(a.v_dot - b.v_dot).max() < 1e-3

    def test_derivative_consistent(self, hot):
        _, _, a, _ = hot
        fd = np.gradient(a.v, a.dt, axis=0, edge_order=2)
        assert np.abs(fd[5:-5] - a.v_dot[5:-5]).max() < 1e-3

    def test_nonuniform_grid_rejected(self, hot):
        _, bath, a, _ = hot
        bad = type(a)(a.times ** 1.01, a.u, a.method)
        with pytest.raises(ValueError):
            v_from_u(bad, bath)


class TestCoherenceTrends:
    """Steady-state |U12| amplitude across small kappa and delta sweeps at eta = 0.3."""

    @staticmethod
    def steady(delta, kappa):
        system = SystemParams.from_detuning(1.0, delta, kappa)
        bath = BathParams(0.3)
        ul = u_localized(find_bound_states(system, bath), np.linspace(0, 200, 4001))
        late = u_volterra(system, bath, 300.0).u[20000:, 0, 1]
        return np.abs(ul[:, 0, 1]).max(), np.abs(late).max()

    def test_increases_with_kappa(self):
        vals = np.array([self.steady(0.1, k) for k in (0.05, 0.1, 0.2)])
        assert np.all(np.diff(vals, axis=0) > 0)

    def test_decreases_with_delta(self):
        vals = np.array([self.steady(d, 0.1) for d in (0.0, 0.1, 0.2)])
        assert np.all(np.diff(vals, axis=0) < 0)
