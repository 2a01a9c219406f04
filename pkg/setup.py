"""
Setup Script for lsor
Automated installation and verification
"""

import subprocess
import sys
from pathlib import Path


def print_header():
    """Print setup header."""
    print("=" * 60)
    print("  lsor - Self-Organized Longitudinal Representations")
    print("  Setup and Installation Script")
    print("=" * 60)
    print()


def check_python_version():
    """Check if Python version meets requirements."""
    print("Checking Python version...")
    version = sys.version_info

    if version < (3, 9):
        print(f"❌ Python 3.9+ required. Found: {version.major}.{version.minor}")
        return False

    print(f"✅ Python {version.major}.{version.minor}.{version.micro} detected")
    return True


def install_dependencies():
    """Install the packages listed in requirements.txt."""
    print("\nInstalling dependencies...")
    print("-" * 60)

    try:
        subprocess.check_call(
            [sys.executable, "-m", "pip", "install", "-r", "requirements.txt"],
            stdout=subprocess.DEVNULL,
            stderr=subprocess.DEVNULL
        )
        print("✅ requirements.txt installed")
    except subprocess.CalledProcessError:
        print("❌ Failed to install requirements.txt")
        return False

    return True


def verify_installation():
    """Verify all required packages are importable."""
    print("\nVerifying installation...")
    print("-" * 60)

    packages = {
        "numpy": "numpy",
        "scipy": "scipy",
        "psutil": "psutil",
        "pytest": "pytest"
    }

    all_installed = True

    for name, import_name in packages.items():
        try:
            __import__(import_name)
            print(f"✅ {name} is available")
        except ImportError:
            print(f"❌ {name} is not available")
            all_installed = False

    return all_installed


def check_required_files():
    """Check if all required files exist."""
    print("\nChecking required files...")
    print("-" * 60)

    required_files = [
        "main.py",
        "config.py",
        "errors.py",
        "logger.py",
        "database.py",
        "diffcore.py",
        "model.py",
        "som.py",
        "longitudinal.py",
        "synthdata.py",
        "trainer.py",
        "analysis.py",
        "ui/styles.py",
        "ui/heatmap.py"
    ]

    all_present = True

    for file in required_files:
        if Path(file).exists():
            print(f"✅ Found: {file}")
        else:
            print(f"❌ Missing: {file}")
            all_present = False

    return all_present


def run_initial_test():
    """Import the modules and validate the default configuration."""
    print("\nRunning initial test...")
    print("-" * 60)

    try:
        import main  # noqa: F401
        from config import Config
        from trainer import TrainConfig

        valid, errors = Config.validate_config()
        train_valid, train_errors = TrainConfig().validate()
        for error in errors + train_errors:
            print(f"❌ {error}")
        if not (valid and train_valid):
            return False

        print("✅ All modules can be imported and defaults validate")
        return True

    except ImportError as e:
        print(f"❌ Import error: {e}")
        return False


def print_next_steps():
    """Print next steps for the user."""
    print("\n" + "=" * 60)
    print("  Setup Complete!")
    print("=" * 60)
    print("\n📋 Next Steps:")
    print("   1. Review QUICKSTART.md for usage guide")
    print("   2. Generate a cohort: python main.py gen --out cohort.csv")
    print("   3. Train: python main.py train --cohort cohort.csv")
    print("   4. Analyze: python main.py analyze --checkpoint runs/<run>/checkpoint.json --cohort cohort.csv")
    print("   5. Run the tests: python -m pytest -m \"not slow\"")
    print("\n📚 For detailed documentation:")
    print("   See README.md and QUICKSTART.md")
    print()


def main():
    """Main setup function."""
    print_header()

    if not check_python_version():
        print("\n❌ Setup failed: Python version requirement not met")
        return 1

    if not install_dependencies():
        print("\n❌ Setup failed: Could not install dependencies")
        print("   Try manually: pip install -r requirements.txt")
        return 1

    if not verify_installation():
        print("\n❌ Setup failed: Dependencies not properly installed")
        return 1

    if not check_required_files():
        print("\n⚠️  Warning: Some required files are missing")

    if not run_initial_test():
        print("\n⚠️  Warning: Initial test failed")

    print_next_steps()

    return 0


if __name__ == "__main__":
    sys.exit(main())
