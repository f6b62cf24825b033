"""Tests for the MCP tool server, called in memory through a fastmcp client."""

import pytest
from fastmcp import Client

from src.app.app import server
from src.helpers.core import TANH2

pytestmark = pytest.mark.asyncio


async def _call(tool, **arguments) -> str:
    async with Client(server) as client:
        result = await client.call_tool(tool, arguments)
    return result.content[0].text


async def test_tools_are_registered():
    async with Client(server) as client:
        names = {tool.name for tool in await client.list_tools()}
        prompts = {prompt.name for prompt in await client.list_prompts()}
    assert {"run_scenario", "compare_models", "sweep_kappa", "verify_properties",
            "equilibrium_point", "linearize"} <= names
    assert "reproduce_table1" in prompts


async def test_equilibrium_point():
    text = await _call("equilibrium_point", v_bar=TANH2)
    assert "spacing=2" in text


async def test_equilibrium_point_out_of_range():
    text = await _call("equilibrium_point", v_bar=3.0)
    assert text.startswith("Error")


async def test_linearize_reports_focus():
    text = await _call("linearize", v_bar=TANH2)
    assert "J = [[0, 1], [-2, -2.75]]" in text
    assert "stable focus" in text


async def test_linearize_rejects_bad_gains():
    text = await _call("linearize", v_bar=1.0, alpha=4.0)
    assert "beta must exceed alpha" in text


async def test_run_scenario_writes_outputs(tmp_path):
    path = tmp_path / "short.yaml"
    path.write_text(
        "name: short\n"
        "platoon: {lead: {position: 4.0, velocity: 1.0}, count: 1, velocity: 0.5, spacing: 3.0}\n"
        "sim: {tf: 2.0, dt: 0.01}\n",
        encoding="utf-8",
    )
    text = await _call("run_scenario", scenario=str(path), output_dir=str(tmp_path / "out"))
    assert "Scenario 'short' (proposed), 200 steps" in text
    assert (tmp_path / "out" / "trajectory.csv").exists()
    assert (tmp_path / "out" / "events.log").exists()


async def test_run_scenario_reports_bad_file(tmp_path):
    text = await _call("run_scenario", scenario=str(tmp_path / "missing.yaml"))
    assert text.startswith("Error running scenario")
