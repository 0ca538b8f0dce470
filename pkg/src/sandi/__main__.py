from sandi.cli import main

raise SystemExit(main())
