from eqtlkit.cli import main

main()
