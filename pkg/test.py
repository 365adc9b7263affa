"""
Test script to verify all components are working
"""
import os
import sys
from pathlib import Path


def test_imports():
    """Test that all modules can be imported"""
    print(" Testing imports...")

    from config import Config
    print("  ✓ Config imported")

    from src.network import NetworkTopology, build_admittance
    print("  ✓ Network model imported")

    from src.powerflow import solve_load_flow_newton, existence_certificate
    print("  ✓ Power flow imported")

    from src.qp import solve_qp, solve_miqp
    print("  ✓ QP core imported")

    from src.ems import plan
    print("  ✓ EMS imported")

    from src.secondary import Translator
    print("  ✓ Secondary control imported")

    from src.simulation import run, load_scenario
    print("  ✓ Simulation imported")

    print("\n All imports successful!")


def test_dependencies():
    """Test that required dependencies are available"""
    print("\n Testing dependencies...")

    import numpy
    print(f"  ✓ numpy {numpy.__version__}")

    import scipy
    from scipy.optimize import linprog
    print(f"  ✓ scipy {scipy.__version__} (HiGHS via linprog)")

    import networkx
    print(f"  ✓ networkx {networkx.__version__}")

    import pandas
    print(f"  ✓ pandas {pandas.__version__}")

    import dotenv
    print("  ✓ python-dotenv available")

    print("\n All dependencies available!")


def test_config():
    """Test configuration and environment overrides"""
    print("\n Testing configuration...")
    from config import Config

    assert Config.OUTPUT_DIR == "output"
    assert Config.DEFAULT_SCENARIO == "scenarios/dc16.json"
    assert 0 < Config.LF_TOL < 1e-6
    print("  ✓ Defaults")

    os.environ["DCMG_LF_MAX_ITER"] = "7"
    os.environ["DCMG_OUTPUT_DIR"] = "elsewhere"
    try:
        settings = Config.from_env(env_file="does-not-exist.env")
        assert settings.LF_MAX_ITER == 7
        assert settings.OUTPUT_DIR == "elsewhere"
        assert Config.LF_MAX_ITER == 50
        print("  ✓ DCMG_ overrides applied to a copy")
    finally:
        del os.environ["DCMG_LF_MAX_ITER"]
        del os.environ["DCMG_OUTPUT_DIR"]

    print("\n Configuration valid!")


def test_directory_structure():
    """Test that all directories exist"""
    print("\n Testing directory structure...")

    base = Path(__file__).parent

    required_dirs = [
        base / "src" / "network",
        base / "src" / "powerflow",
        base / "src" / "qp",
        base / "src" / "ems",
        base / "src" / "secondary",
        base / "src" / "simulation",
    ]

    required_files = [
        base / "config.py",
        base / "dcmg_cli.py",
        base / "scenarios" / "dc16.json",
        base / "README.md",
    ]

    missing = [p for p in required_dirs + required_files if not p.exists()]
    for path in missing:
        print(f"   {path.name} missing")
    assert not missing

    print("\n Directory structure complete!")


def main():
    """Run all tests"""
    print("=" * 60)
    print("DC Microgrid Control - Component Tests")
    print("=" * 60)

    results = []
    for name, test in [
        ("Directory Structure", test_directory_structure),
        ("Dependencies", test_dependencies),
        ("Imports", test_imports),
        ("Configuration", test_config),
    ]:
        try:
            test()
            results.append((name, True))
        except Exception as e:
            print(f"\n {name} failed: {e}")
            results.append((name, False))

    print("\n" + "=" * 60)
    print("Test Results Summary")
    print("=" * 60)

    for name, result in results:
        status = " PASS" if result else " FAIL"
        print(f"{status} - {name}")

    if all(result for _, result in results):
        print("\n All tests passed! Ready to simulate.")
        print("\nNext steps:")
        print("  1. Run: python dcmg_cli.py validate")
        print("  2. Run: python dcmg_cli.py simulate --hours 2 -v")
        print("  3. Run: ./run.sh (full day)")
        return 0

    print("\n  Some tests failed. Please check the errors above.")
    return 1


if __name__ == "__main__":
    sys.exit(main())
