"""Per-figure plot specifications.

Axis-scale choices follow the source figures: relaxation and tail plots are
log-linear (log y over linear x), the bound schedule is log-log, and the
first-fluctuation-time plot is linear.  `drop_nonpositive` must be set
explicitly for tails whose far bins are empty; without it, nonpositive
values on a log axis are an error, never silently dropped.
"""

from __future__ import annotations

from dataclasses import dataclass, field


@dataclass(frozen=True)
class PlotSpec:
    figure_id: str
    x: str
    y: str
    group: str = ""  # one curve per distinct value; empty = single curve
    xscale: str = "linear"
    yscale: str = "linear"
    xlabel: str = ""
    ylabel: str = ""
    title: str = ""
    row_filter: tuple = ()  # (column, (allowed, values, ...))
    drop_nonpositive: bool = False
    drop_nan: bool = False

    def columns_used(self) -> list:
        cols = [self.x, self.y]
        if self.group:
            cols.append(self.group)
        if self.row_filter:
            cols.append(self.row_filter[0])
        return cols


FIGURES = {
    "rqc_relax": PlotSpec(
        figure_id="rqc_relax",
        x="time", y="rms_entropy",
        yscale="log",
        xlabel="time (circuit depth)", ylabel="RMS entropy over trials",
        title="Relaxation of a brickwork circuit subsystem",
        drop_nonpositive=True,
    ),
    "rqc_tails": PlotSpec(
        figure_id="rqc_tails",
        x="delta_s", y="prob", group="time",
        yscale="log",
        xlabel="entropy fluctuation (nats)", ylabel="Pr(S_max - S >= x)",
        title="Distribution of entropy fluctuations, brickwork circuits",
        drop_nonpositive=True,
    ),
    "rqc_tail_means": PlotSpec(
        figure_id="rqc_tail_means",
        x="time", y="tail_mean", group="alpha",
        yscale="log",
        xlabel="time (circuit depth)", ylabel="mean fluctuation of rarest 10^-a slice",
        title="Tails of the fluctuation distribution over time",
        drop_nonpositive=True,
    ),
    "ham_relax": PlotSpec(
        figure_id="ham_relax",
        x="time", y="fluct", group="n",
        yscale="log",
        xlabel="time", ylabel="distance of subsystem state from its time average",
        title="Relaxation of subsystems for spin chains",
    ),
    "ham_stationary": PlotSpec(
        figure_id="ham_stationary",
        x="delta_s_bits", y="prob", group="n",
        yscale="log",
        xlabel="entropy fluctuation (bits)", ylabel="fraction of time deviating",
        title="Post-equilibrium fluctuations, Hamiltonian evolution",
        drop_nonpositive=True,
    ),
    "ham_ttf": PlotSpec(
        figure_id="ham_ttf",
        x="delta_s_bits", y="mean_ttf", group="n",
        xlabel="entropy fluctuation (bits)", ylabel="time to first fluctuation",
        title="Time until fluctuations, Hamiltonian evolution",
        drop_nan=True,
    ),
    "ccrqc_homog": PlotSpec(
        figure_id="ccrqc_homog",
        x="time", y="rms_entropy", group="n",
        yscale="log",
        xlabel="time (circuit depth)", ylabel="RMS entropy over trials",
        title="Charge-conserving circuits, homogeneous initial charge",
        drop_nonpositive=True,
    ),
    "ccrqc_step": PlotSpec(
        figure_id="ccrqc_step",
        x="time", y="rms_entropy", group="n",
        yscale="log",
        xlabel="time (circuit depth)", ylabel="RMS entropy over trials",
        title="Charge-conserving circuits, step initial charge",
        drop_nonpositive=True,
    ),
    "bounds_sweep": PlotSpec(
        figure_id="bounds_sweep",
        x="t", y="value", group="bound_id",
        xscale="log", yscale="log",
        xlabel="time (circuit depth)", ylabel="fluctuation probability bound",
        title="Bound schedule over circuit depth",
        row_filter=("bound_id", ("late_entropy", "late_trace", "early_entropy")),
    ),
}
