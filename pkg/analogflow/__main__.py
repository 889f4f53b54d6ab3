import sys

from analogflow.main import main

sys.exit(main())
