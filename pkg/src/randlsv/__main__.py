import sys

from randlsv.cli import main

sys.exit(main())
