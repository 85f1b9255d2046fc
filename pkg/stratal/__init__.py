# Stratal package: a lambda-calculus with regions, stratified effects and timed threads
