import pytest

from turbulink import cli
from turbulink.cli import EXIT_CONFIG, EXIT_NUMERIC, EXIT_OK, main, run_subcommand, sweep
from turbulink.config import (
    ConfigError,
    RunConfig,
    apply_overrides,
    config_from_tables,
    parse_config,
    parse_table_text,
    serialize_config,
)
from turbulink.ipe import SolverError

PAPER_CONFIG = """
# paper-default channel
[link]
distance_m = 30000.0
wavelength_m = 3.95e-06
waist_m = 0.1457

[turbulence]
cn2 = 1e-15

[source]
sigma_a_trad = 10.0
sigma_b_trad = 80.0
"""


class TestConfigParsing:
    def test_minimal_defaults(self, tmp_path):
        path = tmp_path / "minimal.cfg"
        path.write_text("[link]\ndistance_m = 30000.0\n")
        config = parse_config(str(path))
        assert config.distance_m == 30000.0
        assert config.waist_m == 0.1457
        assert config.cutoff == 4
        assert config.scheme == "truncated_exact"
        assert config.steps == 256

    def test_range_violation_names_key(self, tmp_path):
        path = tmp_path / "bad.cfg"
        path.write_text("[link]\nwavelength_m = -1\n")
        with pytest.raises(ConfigError, match="wavelength_m"):
            parse_config(str(path))

    def test_parse_error_reports_line_and_column(self):
        with pytest.raises(ConfigError, match="line 2"):
            parse_table_text("[link]\ndistance_m 30000\n")
        with pytest.raises(ConfigError, match="column"):
            parse_table_text("[link]\ndistance_m = \n")

    def test_key_outside_table(self):
        with pytest.raises(ConfigError, match="line 1"):
            parse_table_text("distance_m = 1.0\n")

    def test_unknown_keys_rejected(self):
        with pytest.raises(ConfigError, match="unknown key"):
            config_from_tables({"link": {"bogus": 1.0}})
        with pytest.raises(ConfigError, match="unknown table"):
            config_from_tables({"bogus": {}})

    def test_paper_default_round_trip(self, tmp_path):
        base = RunConfig(sweep_axes=("waist_m",), sweep_values=((0.1, 0.1457, 0.2),))
        text = serialize_config(base)
        path = tmp_path / "round.cfg"
        path.write_text(text)
        again = parse_config(str(path))
        assert again == base
        assert serialize_config(again) == text

    def test_sweep_point_guard(self):
        tables = {
            "sweep": {
                "axes": ["distance_m", "cn2"],
                "distance_m": [float(d) for d in range(1, 402)],
                "cn2": [1e-15] * 400,
            }
        }
        with pytest.raises(ConfigError, match="100000"):
            config_from_tables(tables)

    def test_overrides(self):
        config = apply_overrides(RunConfig(), {"cn2": "1e-16", "cutoff": "2"})
        assert config.cn2 == 1e-16
        assert config.cutoff == 2
        with pytest.raises(ConfigError):
            apply_overrides(RunConfig(), {"nonsense": "1"})
        with pytest.raises(ConfigError, match="cn2"):
            apply_overrides(RunConfig(), {"cn2": "1e-5"})

    def test_full_ipe_grid_guard(self):
        with pytest.raises(ConfigError, match="grid_order"):
            apply_overrides(RunConfig(), {"kernel_fidelity": "full_ipe", "grid_order": "32"})


def run_cli(tmp_path, *args):
    return main(["--set", f"output_dir={tmp_path}", *args])


class TestSubcommands:
    def test_schmidt_stdout_numbers(self, tmp_path, capsys):
        code = run_cli(tmp_path, "schmidt")
        out = capsys.readouterr().out
        assert code == EXIT_OK
        assert "0.395062" in out
        assert "0.238988" in out
        assert "0.144573" in out
        assert "0.087458" in out
        assert "13.39" in out  # discarded percent
        assert "1.0745" in out  # amplitude prefactor
        assert "1.1546" in out  # probability prefactor the paper printed

    def test_tmatrix_zero_turbulence_identity(self, tmp_path, capsys):
        code = run_cli(tmp_path, "tmatrix", "--set", "cn2=0", "--set", "grid_order=32")
        assert code == EXIT_OK
        rows = (tmp_path / "tmatrix.csv").read_text().splitlines()
        assert rows[0] == "n,m,S"
        for line in rows[1:]:
            n, m, s = line.split(",")
            expected = 1.0 if n == m else 0.0
            assert abs(float(s) - expected) < 1e-9

    def test_kernel_csv(self, tmp_path):
        code = run_cli(tmp_path, "kernel", "--set", "grid_order=8", "--set", "cn2=1e-16")
        assert code == EXIT_OK
        lines = (tmp_path / "kernel.csv").read_text().splitlines()
        assert lines[0] == "omega1_Trad_s,omega2_Trad_s,P"
        assert len(lines) == 1 + 64
        for line in lines[1:]:
            for cell in line.split(","):
                float(cell)  # plain decimal fields, no wrapper reprs

    def test_coupling_dump(self, tmp_path):
        code = run_cli(tmp_path, "coupling", "--set", "cutoff=1")
        assert code == EXIT_OK
        lines = (tmp_path / "coupling.csv").read_text().splitlines()
        assert lines[0] == "lm,rm,ln,rn,lu,ru,lv,rv,re,im"
        assert len(lines) > 10

    def test_entangle_csv(self, tmp_path):
        code = run_cli(
            tmp_path, "entangle",
            "--set", "cn2=1e-16", "--set", "grid_order=32", "--set", "pair_modes=6",
        )
        assert code == EXIT_OK
        lines = (tmp_path / "entangle.csv").read_text().splitlines()
        assert lines[0] == "n,EN_initial,EN_final,fidelity,degenerate_flag"
        assert len(lines) == 6  # pair_modes - 1 scan rows plus a guard mode
        first = lines[1].split(",")
        assert first[4] == "1"  # n = 0 with fixed mode 0 is degenerate

    def test_validate_passes(self, tmp_path, capsys):
        code = run_cli(tmp_path, "validate")
        out = capsys.readouterr().out
        assert code == EXIT_OK
        assert "FAIL" not in out
        assert out.count("PASS") >= 6

    def test_beam_family(self, tmp_path):
        code = run_cli(tmp_path, "beam")
        assert code == EXIT_OK
        lines = (tmp_path / "beam.csv").read_text().splitlines()
        assert lines[0].startswith("cn2")
        assert len(lines) == 1 + 5 * 25

    def test_determinism_byte_identical(self, tmp_path):
        first = tmp_path / "a"
        second = tmp_path / "b"
        for target in (first, second):
            code = main(["--set", f"output_dir={target}", "tmatrix", "--set", "grid_order=32"])
            assert code == EXIT_OK
        assert (first / "tmatrix.csv").read_bytes() == (second / "tmatrix.csv").read_bytes()
        assert (first / "traces.csv").read_bytes() == (second / "traces.csv").read_bytes()

    def test_config_error_exit_code(self, tmp_path):
        code = main(["--set", "cn2=banana", "schmidt"])
        assert code == EXIT_CONFIG

    def test_missing_config_file(self):
        assert main(["--config", "/nonexistent/path.cfg", "schmidt"]) == EXIT_CONFIG

    def test_missing_profile_csv_at_validation(self):
        with pytest.raises(ConfigError, match="profile_csv"):
            apply_overrides(RunConfig(), {"profile_csv": "/nonexistent/prof.csv"})

    def test_profile_csv_used_by_kernel(self, tmp_path):
        path = tmp_path / "prof.csv"
        path.write_text("height_m,cn2\n1.0,1e-15\n100.0,1e-15\n")
        code = main([
            "--set", f"output_dir={tmp_path}", "--set", f"profile_csv={path}",
            "--set", "grid_order=8", "kernel",
        ])
        assert code == EXIT_OK
        lines = (tmp_path / "kernel.csv").read_text().splitlines()
        assert len(lines) == 65

    def test_numeric_failure_exit_code(self, monkeypatch):
        def explode(config, out):
            raise SolverError("unconverged", 0.0, 1.0)

        monkeypatch.setitem(cli._SUBCOMMANDS, "beam", explode)
        assert run_subcommand("beam", RunConfig()) == EXIT_NUMERIC

    def test_gnuplot_hints(self, capsys):
        assert main(["--gnuplot-hints", "kernel"]) == EXIT_OK
        assert "omega1" in capsys.readouterr().out

    def test_env_var_default_config(self, tmp_path, monkeypatch, capsys):
        path = tmp_path / "env.cfg"
        path.write_text(PAPER_CONFIG)
        monkeypatch.setenv("TURBULINK_CONFIG", str(path))
        code = main(["--set", f"output_dir={tmp_path}", "schmidt"])
        assert code == EXIT_OK
        assert "0.395" in capsys.readouterr().out


class TestSweep:
    def make_config(self, tmp_path, axes_block):
        path = tmp_path / "sweep.cfg"
        path.write_text(PAPER_CONFIG + axes_block)
        return str(path)

    def test_requires_axes(self, tmp_path):
        code = main(["--set", f"output_dir={tmp_path}", "sweep", "beam"])
        assert code == EXIT_CONFIG

    def test_single_point_matches_direct(self, tmp_path, capsys):
        config_path = self.make_config(
            tmp_path, "\n[sweep]\naxes = [\"waist_m\"]\nwaist_m = [0.1457]\n"
        )
        code = main(["--config", config_path, "--set", f"output_dir={tmp_path}", "sweep", "beam"])
        assert code == EXIT_OK
        lines = (tmp_path / "sweep_beam.csv").read_text().splitlines()
        assert lines[0] == "waist_m,probability"
        waist, probability = lines[1].split(",")
        from turbulink.config import RunConfig
        from turbulink.ipe import analytic_decay
        from turbulink.turbulence import LinkGeometry, TurbulenceProfile

        direct = analytic_decay(
            TurbulenceProfile.from_constant(1e-15),
            LinkGeometry(
                path_length=30000.0,
                transmitter_height=19.0,
                receiver_height=19.0,
                waist=0.1457,
                wavelength=3.95e-6,
            ),
        )
        assert float(probability) == pytest.approx(direct, rel=1e-12)

    def test_waist_sweep_argmax_reproduces_peak(self, tmp_path):
        waists = [round(0.06 + 0.005 * k, 3) for k in range(41)]
        block = "\n[sweep]\naxes = [\"waist_m\"]\nwaist_m = [" + ", ".join(map(str, waists)) + "]\n"
        config_path = self.make_config(tmp_path, block)
        code = main([
            "--config", config_path, "--set", f"output_dir={tmp_path}",
            "--set", "cn2=1e-16", "sweep", "beam",
        ])
        assert code == EXIT_OK
        lines = (tmp_path / "sweep_beam.csv").read_text().splitlines()[1:]
        table = [tuple(map(float, line.split(","))) for line in lines]
        best = max(table, key=lambda row: row[1])[0]
        assert abs(best - 0.1457) / 0.1457 < 0.05

    def test_parallel_soundness(self, tmp_path):
        block = "\n[sweep]\naxes = [\"cn2\"]\ncn2 = [1e-16, 1e-15, 1e-14]\n"
        config_path = self.make_config(tmp_path, block)
        outputs = []
        for threads, sub in (("1", "t1"), ("3", "t3")):
            out_dir = tmp_path / sub
            code = main([
                "--config", config_path, "--set", f"output_dir={out_dir}",
                "--threads", threads, "sweep", "beam",
            ])
            assert code == EXIT_OK
            outputs.append((out_dir / "sweep_beam.csv").read_bytes())
        assert outputs[0] == outputs[1]

    def test_axis_ordering_in_output(self, tmp_path):
        block = "\n[sweep]\naxes = [\"cn2\"]\ncn2 = [1e-14, 1e-16, 1e-15]\n"
        config_path = self.make_config(tmp_path, block)
        code = main(["--config", config_path, "--set", f"output_dir={tmp_path}", "sweep", "beam"])
        assert code == EXIT_OK
        lines = (tmp_path / "sweep_beam.csv").read_text().splitlines()[1:]
        values = [float(line.split(",")[0]) for line in lines]
        assert values == sorted(values)
