from vanishing_depth.cli import main

main()
