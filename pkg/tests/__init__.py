import sys

sys.path.append(".")
sys.path.append("./src")
