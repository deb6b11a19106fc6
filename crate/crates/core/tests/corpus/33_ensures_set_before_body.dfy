method Digits() returns (s: set<int>)
  ensures s == {0, 1, 2}
{
  s := {0, 1, 2};
}

method Member(x: int) returns (b: bool)
  ensures b <==> x in {1, 2}
{
  b := x == 1 || x == 2;
}
