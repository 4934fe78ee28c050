import sys

from foascene.cli import main

sys.exit(main())
