import sys

from ckd.harness.cli import main

sys.exit(main())
