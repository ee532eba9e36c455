@problemName BadLabel
@dimensions 1
@classLabel true a b
@data
1,2,3:a
4,5,6:c
