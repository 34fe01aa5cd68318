"""Generate the bundled feeder files from the published IEEE test feeder tables.

Run from the repository root::

    python tools/build_feeders.py

Flattening applied to the raw data (the library models lines, constant-PQ
loads and fixed-ratio regulators only):

* Delta-connected spot loads are split half/half onto their two phases.
* Constant-current and constant-impedance load models are treated as
  constant-PQ at nominal.
* Closed switches become 0.0001 ohm jumpers.
* The 37-node substation regulator rides on the 799-701 branch; the
  123-node regulators ride on the 149-1, 9-14, 25-26 and 160-67 branches
  (150-149 stays a plain closed switch).
* Regulator ratios are fixed boost settings: studies here do not re-tap.
  Phases a/c sit at published-style tap positions; the lightly loaded
  phase b is held a fraction of a step higher, the way a per-phase
  regulator with line-drop compensation rides on the light phase.  The
  values keep the solved base profile inside 0.95..1.05 pu.
* The 37-node 709-775 transformer becomes a series impedance at its own
  base (500 kVA, ~1.1% R, 2% X).
* IEEE-123: the unloaded stub 51-151 and the 61-610 LV transformer are
  omitted so the node count is exactly 123.
"""
import math
import pathlib

OUT = pathlib.Path(__file__).resolve().parents[1] / "src" / "pvsense" / "data"

# Regulator voltage ratios per phase (a, b, c).
GAINS_37 = (1.04375, 1.05738, 1.04375)         # 799-701
GAINS_123_REG1 = (1.04375, 1.052874, 1.04375)  # 149-1
GAINS_123_REG2 = (0.99375, 1.0, 1.0)           # 9-14
GAINS_123_REG3 = (1.0, 1.0, 0.99375)           # 25-26
GAINS_123_REG4 = (1.05, 1.00625, 1.03125)      # 160-67


# --- IEEE 37-node -----------------------------------------------------------
# Underground line configurations, ohms per mile, upper triangle (aa ab ac bb
# bc cc); all segments are three-phase.
CONFIGS_37 = {
    721: [(0.2926, 0.1973), (0.0673, -0.0368), (0.0337, -0.0417),
          (0.2646, 0.1900), (0.0673, -0.0368), (0.2926, 0.1973)],
    722: [(0.4751, 0.2973), (0.1629, -0.0326), (0.1234, -0.0607),
          (0.4488, 0.2678), (0.1629, -0.0326), (0.4751, 0.2973)],
    723: [(1.2936, 0.6713), (0.4871, 0.2111), (0.4585, 0.1521),
          (1.3022, 0.6326), (0.4871, 0.2111), (1.2936, 0.6713)],
    724: [(2.0952, 0.7758), (0.5204, 0.2738), (0.4926, 0.2123),
          (2.1068, 0.7398), (0.5204, 0.2738), (2.0952, 0.7758)],
}

# from, to, length_ft, config
LINES_37 = [
    (799, 701, 1850, 721),
    (701, 702, 960, 722),
    (702, 705, 400, 724),
    (702, 713, 360, 723),
    (702, 703, 1320, 722),
    (703, 727, 240, 724),
    (703, 730, 600, 723),
    (704, 714, 80, 724),
    (704, 720, 800, 723),
    (705, 742, 320, 724),
    (705, 712, 240, 724),
    (706, 725, 280, 724),
    (707, 724, 760, 724),
    (707, 722, 120, 724),
    (708, 733, 320, 723),
    (708, 732, 320, 724),
    (709, 731, 600, 723),
    (709, 708, 320, 723),
    (710, 735, 200, 724),
    (710, 736, 1280, 724),
    (711, 741, 400, 723),
    (711, 740, 200, 724),
    (713, 704, 520, 723),
    (714, 718, 520, 724),
    (720, 707, 920, 724),
    (720, 706, 600, 723),
    (727, 744, 280, 723),
    (730, 709, 200, 723),
    (733, 734, 560, 723),
    (734, 737, 640, 723),
    (734, 710, 520, 724),
    (737, 738, 400, 723),
    (738, 711, 400, 723),
    (744, 728, 200, 724),
    (744, 729, 280, 724),
]

# Delta spot loads: node -> (kw, kvar) per phase pair ab, bc, ca.
LOADS_37_DELTA = {
    701: ((140, 70), (140, 70), (350, 175)),
    712: ((0, 0), (0, 0), (85, 40)),
    713: ((0, 0), (0, 0), (85, 40)),
    714: ((17, 8), (21, 10), (0, 0)),
    718: ((85, 40), (0, 0), (0, 0)),
    720: ((0, 0), (0, 0), (85, 40)),
    722: ((0, 0), (140, 70), (21, 10)),
    724: ((0, 0), (42, 21), (0, 0)),
    725: ((0, 0), (42, 21), (0, 0)),
    727: ((0, 0), (0, 0), (42, 21)),
    728: ((42, 21), (42, 21), (42, 21)),
    729: ((42, 21), (0, 0), (0, 0)),
    730: ((0, 0), (0, 0), (85, 40)),
    731: ((0, 0), (85, 40), (0, 0)),
    732: ((0, 0), (0, 0), (42, 21)),
    733: ((85, 40), (0, 0), (0, 0)),
    734: ((0, 0), (0, 0), (42, 21)),
    735: ((0, 0), (0, 0), (85, 40)),
    736: ((0, 0), (42, 21), (0, 0)),
    737: ((140, 70), (0, 0), (0, 0)),
    738: ((126, 62), (0, 0), (0, 0)),
    740: ((0, 0), (0, 0), (85, 40)),
    741: ((0, 0), (0, 0), (42, 21)),
    742: ((8, 4), (85, 40), (0, 0)),
    744: ((42, 21), (0, 0), (0, 0)),
}

# 709-775 transformer: 500 kVA, 4.8 kV, ~1.1% R, 2% X at its own base.
XFM_37_OHMS = complex(0.507, 0.922)


# --- IEEE 123-node ----------------------------------------------------------
# Overhead configs 1-11 and underground config 12, ohms per mile, upper
# triangle; zeros mark absent phases.
CONFIGS_123 = {
    1: [(0.4576, 1.0780), (0.1560, 0.5017), (0.1535, 0.3849),
        (0.4666, 1.0482), (0.1580, 0.4236), (0.4615, 1.0651)],
    2: [(0.4666, 1.0482), (0.1580, 0.4236), (0.1560, 0.5017),
        (0.4615, 1.0651), (0.1535, 0.3849), (0.4576, 1.0780)],
    3: [(0.4615, 1.0651), (0.1535, 0.3849), (0.1580, 0.4236),
        (0.4576, 1.0780), (0.1560, 0.5017), (0.4666, 1.0482)],
    4: [(0.4615, 1.0651), (0.1580, 0.4236), (0.1535, 0.3849),
        (0.4666, 1.0482), (0.1560, 0.5017), (0.4576, 1.0780)],
    5: [(0.4666, 1.0482), (0.1560, 0.5017), (0.1580, 0.4236),
        (0.4576, 1.0780), (0.1535, 0.3849), (0.4615, 1.0651)],
    6: [(0.4576, 1.0780), (0.1535, 0.3849), (0.1560, 0.5017),
        (0.4615, 1.0651), (0.1580, 0.4236), (0.4666, 1.0482)],
    7: [(0.4576, 1.0780), (0.0, 0.0), (0.1535, 0.3849),
        (0.0, 0.0), (0.0, 0.0), (0.4615, 1.0651)],
    8: [(0.4576, 1.0780), (0.1535, 0.3849), (0.0, 0.0),
        (0.4615, 1.0651), (0.0, 0.0), (0.0, 0.0)],
    9: [(1.3292, 1.3475), (0.0, 0.0), (0.0, 0.0),
        (0.0, 0.0), (0.0, 0.0), (0.0, 0.0)],
    10: [(0.0, 0.0), (0.0, 0.0), (0.0, 0.0),
         (1.3292, 1.3475), (0.0, 0.0), (0.0, 0.0)],
    11: [(0.0, 0.0), (0.0, 0.0), (0.0, 0.0),
         (0.0, 0.0), (0.0, 0.0), (1.3292, 1.3475)],
    12: [(1.5209, 0.7521), (0.5198, 0.2775), (0.4924, 0.2157),
         (1.5329, 0.7162), (0.5198, 0.2775), (1.5209, 0.7521)],
}

LINES_123 = [
    (1, 2, 175, 10), (1, 3, 250, 11), (1, 7, 300, 1),
    (3, 4, 200, 11), (3, 5, 325, 11), (5, 6, 250, 11),
    (7, 8, 200, 1), (8, 12, 225, 10), (8, 9, 225, 9), (8, 13, 300, 1),
    (9, 14, 425, 9),
    (13, 34, 150, 11), (13, 18, 825, 2),
    (14, 11, 250, 9), (14, 10, 250, 9),
    (15, 16, 375, 11), (15, 17, 350, 11),
    (18, 19, 250, 9), (18, 21, 300, 2),
    (19, 20, 325, 9),
    (21, 22, 525, 10), (21, 23, 250, 2),
    (23, 24, 550, 11), (23, 25, 275, 2),
    (25, 26, 350, 7), (25, 28, 200, 2),
    (26, 27, 275, 7), (26, 31, 225, 11),
    (27, 33, 500, 9),
    (28, 29, 300, 2), (29, 30, 350, 2), (30, 250, 200, 2),
    (31, 32, 300, 11),
    (34, 15, 100, 11),
    (35, 36, 650, 8), (35, 40, 250, 1),
    (36, 37, 300, 9), (36, 38, 250, 10), (38, 39, 325, 10),
    (40, 41, 325, 11), (40, 42, 250, 1),
    (42, 43, 500, 10), (42, 44, 200, 1),
    (44, 45, 200, 9), (44, 47, 250, 1),
    (45, 46, 300, 9),
    (47, 48, 150, 4), (47, 49, 250, 4),
    (49, 50, 250, 4), (50, 51, 250, 4),
    (52, 53, 200, 1), (53, 54, 125, 1),
    (54, 55, 275, 1), (54, 57, 350, 3),
    (55, 56, 275, 1),
    (57, 58, 250, 10), (57, 60, 750, 3),
    (58, 59, 250, 10),
    (60, 61, 550, 5), (60, 62, 250, 12),
    (62, 63, 175, 12), (63, 64, 350, 12),
    (64, 65, 425, 12), (65, 66, 325, 12),
    (67, 68, 200, 9), (67, 72, 275, 3), (67, 97, 250, 3),
    (68, 69, 275, 9), (69, 70, 325, 9), (70, 71, 275, 9),
    (72, 73, 275, 11), (72, 76, 200, 3),
    (73, 74, 350, 11), (74, 75, 400, 11),
    (76, 77, 400, 6), (76, 86, 700, 3),
    (77, 78, 100, 6), (78, 79, 225, 6), (78, 80, 475, 6),
    (80, 81, 475, 6), (81, 82, 250, 6), (81, 84, 675, 11),
    (82, 83, 250, 6), (84, 85, 475, 11),
    (86, 87, 450, 6), (87, 88, 175, 9), (87, 89, 275, 6),
    (89, 90, 225, 10), (89, 91, 225, 6),
    (91, 92, 300, 11), (91, 93, 225, 6),
    (93, 94, 275, 9), (93, 95, 300, 6),
    (95, 96, 200, 10),
    (97, 98, 275, 3), (98, 99, 550, 3), (99, 100, 300, 3),
    (100, 450, 800, 3),
    (101, 102, 225, 11), (101, 105, 275, 3),
    (102, 103, 325, 11), (103, 104, 700, 11),
    (105, 106, 225, 10), (105, 108, 325, 3),
    (106, 107, 575, 10),
    (108, 109, 450, 9), (108, 300, 1000, 3),
    (109, 110, 300, 9),
    (110, 111, 575, 9), (110, 112, 125, 9),
    (112, 113, 525, 9), (113, 114, 325, 9),
    (135, 35, 375, 4), (149, 1, 400, 1), (152, 52, 400, 1),
    (160, 67, 350, 6), (197, 101, 250, 3),
]

# Normally-closed switches (modeled as 0.0001 ohm three-phase jumpers).
SWITCHES_123 = [(13, 152), (18, 135), (60, 160), (97, 197), (150, 149)]

# Wye spot loads: node -> per-phase (kw, kvar) for a, b, c.
LOADS_123_WYE = {
    1: ((40, 20), (0, 0), (0, 0)), 2: ((0, 0), (20, 10), (0, 0)),
    4: ((0, 0), (0, 0), (40, 20)), 5: ((0, 0), (0, 0), (20, 10)),
    6: ((0, 0), (0, 0), (40, 20)), 7: ((20, 10), (0, 0), (0, 0)),
    9: ((40, 20), (0, 0), (0, 0)), 10: ((20, 10), (0, 0), (0, 0)),
    11: ((40, 20), (0, 0), (0, 0)), 12: ((0, 0), (20, 10), (0, 0)),
    16: ((0, 0), (0, 0), (40, 20)), 17: ((0, 0), (0, 0), (20, 10)),
    19: ((40, 20), (0, 0), (0, 0)), 20: ((40, 20), (0, 0), (0, 0)),
    22: ((0, 0), (40, 20), (0, 0)), 24: ((0, 0), (0, 0), (40, 20)),
    28: ((40, 20), (0, 0), (0, 0)), 29: ((40, 20), (0, 0), (0, 0)),
    30: ((0, 0), (0, 0), (40, 20)), 31: ((0, 0), (0, 0), (20, 10)),
    32: ((0, 0), (0, 0), (20, 10)), 33: ((40, 20), (0, 0), (0, 0)),
    34: ((0, 0), (0, 0), (40, 20)), 37: ((40, 20), (0, 0), (0, 0)),
    38: ((0, 0), (20, 10), (0, 0)), 39: ((0, 0), (20, 10), (0, 0)),
    41: ((0, 0), (0, 0), (20, 10)), 42: ((20, 10), (0, 0), (0, 0)),
    43: ((0, 0), (40, 20), (0, 0)), 45: ((20, 10), (0, 0), (0, 0)),
    46: ((20, 10), (0, 0), (0, 0)), 47: ((35, 25), (35, 25), (35, 25)),
    48: ((70, 50), (70, 50), (70, 50)), 49: ((35, 25), (70, 50), (35, 20)),
    50: ((0, 0), (0, 0), (40, 20)), 51: ((20, 10), (0, 0), (0, 0)),
    52: ((40, 20), (0, 0), (0, 0)), 53: ((40, 20), (0, 0), (0, 0)),
    55: ((20, 10), (0, 0), (0, 0)), 56: ((0, 0), (20, 10), (0, 0)),
    58: ((0, 0), (20, 10), (0, 0)), 59: ((0, 0), (20, 10), (0, 0)),
    60: ((20, 10), (0, 0), (0, 0)), 62: ((0, 0), (0, 0), (40, 20)),
    63: ((40, 20), (0, 0), (0, 0)), 64: ((0, 0), (75, 35), (0, 0)),
    66: ((0, 0), (0, 0), (75, 35)), 68: ((20, 10), (0, 0), (0, 0)),
    69: ((40, 20), (0, 0), (0, 0)), 70: ((20, 10), (0, 0), (0, 0)),
    71: ((40, 20), (0, 0), (0, 0)), 73: ((0, 0), (0, 0), (40, 20)),
    74: ((0, 0), (0, 0), (40, 20)), 75: ((0, 0), (0, 0), (40, 20)),
    77: ((0, 0), (40, 20), (0, 0)), 79: ((40, 20), (0, 0), (0, 0)),
    80: ((0, 0), (40, 20), (0, 0)), 82: ((40, 20), (0, 0), (0, 0)),
    83: ((0, 0), (0, 0), (20, 10)), 84: ((0, 0), (0, 0), (20, 10)),
    85: ((0, 0), (0, 0), (40, 20)), 86: ((0, 0), (20, 10), (0, 0)),
    87: ((0, 0), (40, 20), (0, 0)), 88: ((40, 20), (0, 0), (0, 0)),
    90: ((0, 0), (40, 20), (0, 0)), 92: ((0, 0), (0, 0), (40, 20)),
    94: ((40, 20), (0, 0), (0, 0)), 95: ((0, 0), (20, 10), (0, 0)),
    96: ((0, 0), (20, 10), (0, 0)), 98: ((40, 20), (0, 0), (0, 0)),
    99: ((0, 0), (40, 20), (0, 0)), 100: ((0, 0), (0, 0), (40, 20)),
    102: ((0, 0), (0, 0), (20, 10)), 103: ((0, 0), (0, 0), (40, 20)),
    104: ((0, 0), (0, 0), (40, 20)), 106: ((0, 0), (40, 20), (0, 0)),
    107: ((0, 0), (40, 20), (0, 0)), 109: ((40, 20), (0, 0), (0, 0)),
    111: ((20, 10), (0, 0), (0, 0)), 112: ((20, 10), (0, 0), (0, 0)),
    113: ((40, 20), (0, 0), (0, 0)), 114: ((20, 10), (0, 0), (0, 0)),
}

# Delta spot loads: node -> (kw, kvar) per phase pair ab, bc, ca.
LOADS_123_DELTA = {
    35: ((40, 20), (0, 0), (0, 0)),
    65: ((35, 25), (35, 25), (70, 50)),
    76: ((105, 80), (70, 50), (70, 50)),
}


def delta_to_wye(pairs):
    (pab, qab), (pbc, qbc), (pca, qca) = pairs
    return ((pab + pca) / 2, (qab + qca) / 2), \
           ((pab + pbc) / 2, (qab + qbc) / 2), \
           ((pbc + pca) / 2, (qbc + qca) / 2)


def fmt_c(z):
    sign = "+" if z.imag >= 0 else "-"
    return f"{z.real:.8g}{sign}j{abs(z.imag):.8g}"


def cfg_matrix(cfg_table, cfg, length_ft):
    scale = length_ft / 5280.0
    (aa, ab, ac, bb, bc, cc) = [complex(r, x) * scale for r, x in cfg_table[cfg]]
    return [[aa, ab, ac], [ab, bb, bc], [ac, bc, cc]]


def cfg_phases(cfg_table, cfg):
    aa, _, _, bb, _, cc = cfg_table[cfg]
    return "".join(p for p, d in zip("abc", (aa, bb, cc)) if d != (0.0, 0.0))


def jumper_matrix():
    j = complex(1e-4, 0.0)
    return [[j, 0, 0], [0, j, 0], [0, 0, j]]


def build_ieee37():
    lines = ["[meta]", "name = ieee37", "v_nominal_kv = 4.8", "source = 799", ""]
    nodes = [799] + sorted({n for seg in LINES_37 for n in seg[:2]} - {799}) + [775]
    lines.append("[nodes]")
    lines.append("# id  phases")
    for n in nodes:
        lines.append(f"{n}  abc")
    lines += ["", "[branches]",
              "# from  to  z_aa z_ab z_ac z_ba z_bb z_bc z_ca z_cb z_cc [ohm]"]
    for u, v, ft, cfg in LINES_37:
        m = cfg_matrix(CONFIGS_37, cfg, ft)
        lines.append(f"{u}  {v}  " + " ".join(fmt_c(z) for row in m for z in row))
    xfm = [[XFM_37_OHMS if i == j else 0j for j in range(3)] for i in range(3)]
    lines.append("709  775  " + " ".join(fmt_c(z) for row in xfm for z in row))
    lines += ["", "[loads]", "# node  phase  kw  kvar"]
    for node in sorted(LOADS_37_DELTA):
        for p, (kw, kvar) in zip("abc", delta_to_wye(LOADS_37_DELTA[node])):
            if kw or kvar:
                lines.append(f"{node}  {p}  {kw:g}  {kvar:g}")
    lines += ["", "[regulators]", "# from  to  gain_a  gain_b  gain_c"]
    lines.append("799  701  " + "  ".join(f"{g:.6f}" for g in GAINS_37))
    return "\n".join(lines) + "\n"


def build_ieee123():
    lines = ["[meta]", "name = ieee123", "v_nominal_kv = 4.16", "source = 150", ""]
    phase_sets = {150: "abc"}
    for u, v, ft, cfg in LINES_123:
        ph = cfg_phases(CONFIGS_123, cfg)
        phase_sets[v] = ph
        phase_sets.setdefault(u, "abc")
    for u, v in SWITCHES_123:
        phase_sets[v] = phase_sets.get(v, "abc")
        phase_sets.setdefault(u, "abc")
    # Supply-side phase sets win: a node fed by a 1-phase lateral keeps
    # the lateral's phase even if listed elsewhere first.
    downstream = {v: cfg for _, v, _, cfg in LINES_123}
    for node, cfg in downstream.items():
        phase_sets[node] = cfg_phases(CONFIGS_123, cfg)
    for _, v in SWITCHES_123:
        phase_sets[v] = "abc"

    def key(n):
        return (0, n) if isinstance(n, int) else (1, n)

    nodes = sorted(phase_sets, key=key)
    lines.append("[nodes]")
    lines.append("# id  phases")
    for n in nodes:
        lines.append(f"{n}  {phase_sets[n]}")
    lines += ["", "[branches]",
              "# from  to  z_aa z_ab z_ac z_ba z_bb z_bc z_ca z_cb z_cc [ohm]"]
    for u, v, ft, cfg in LINES_123:
        m = cfg_matrix(CONFIGS_123, cfg, ft)
        lines.append(f"{u}  {v}  " + " ".join(fmt_c(z) for row in m for z in row))
    for u, v in SWITCHES_123:
        lines.append(f"{u}  {v}  " + " ".join(fmt_c(z) for row in jumper_matrix() for z in row))
    lines += ["", "[loads]", "# node  phase  kw  kvar"]
    merged = {}
    for node, per_phase in LOADS_123_WYE.items():
        for p, (kw, kvar) in zip("abc", per_phase):
            if kw or kvar:
                merged[(node, p)] = (kw, kvar)
    for node, pairs in LOADS_123_DELTA.items():
        for p, (kw, kvar) in zip("abc", delta_to_wye(pairs)):
            if kw or kvar:
                old = merged.get((node, p), (0, 0))
                merged[(node, p)] = (old[0] + kw, old[1] + kvar)
    for (node, p) in sorted(merged, key=lambda t: (t[0], t[1])):
        kw, kvar = merged[(node, p)]
        lines.append(f"{node}  {p}  {kw:g}  {kvar:g}")
    lines += ["", "[regulators]", "# from  to  gain_a  gain_b  gain_c"]
    lines.append("149  1  " + "  ".join(f"{g:.6f}" for g in GAINS_123_REG1))
    lines.append("9  14  " + "  ".join(f"{g:.6f}" for g in GAINS_123_REG2))
    lines.append("25  26  " + "  ".join(f"{g:.6f}" for g in GAINS_123_REG3))
    lines.append("160  67  " + "  ".join(f"{g:.6f}" for g in GAINS_123_REG4))
    return "\n".join(lines) + "\n"


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    (OUT / "ieee37.feeder").write_text(build_ieee37(), encoding="utf-8")
    (OUT / "ieee123.feeder").write_text(build_ieee123(), encoding="utf-8")
    print(f"wrote {OUT / 'ieee37.feeder'}")
    print(f"wrote {OUT / 'ieee123.feeder'}")


if __name__ == "__main__":
    main()
