# makes this a package
