from gllod.cli import main

main()
